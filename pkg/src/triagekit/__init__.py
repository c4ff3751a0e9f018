"""triagekit: desk-scale medical triage engine.

Pipeline: synthetic corpus -> NLP annotation -> ontology -> knowledge graph
-> adaptive question generation -> risk-classed recommendation, plus an HTTP
service and a latency/scaling benchmark harness.
"""

__version__ = "0.1.0"
