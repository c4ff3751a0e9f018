/**
 * In-memory stub of the triage service for development and contract tests.
 * It reproduces the server's observable behavior (question sequencing,
 * denied-parent pruning, red-flag escalation, status codes) so the client
 * builds and its tests run without the backend.
 */

import {
  AnswerValue,
  ApiError,
  Gender,
  HealthPayload,
  QuestionPayload,
  RecommendationPayload,
  Risk,
  SearchCandidate,
  StepResponse,
  TriageApi,
} from "./api.js";

interface MockConcept {
  id: string;
  name: string;
  synonyms: string[];
  redFlag?: boolean;
  femaleOnly?: boolean;
  maleOnly?: boolean;
  parent?: string;
  risk: Risk;
}

const CONCEPTS: MockConcept[] = [
  { id: "k_fieber", name: "fieber", synonyms: ["pyrexie", "erhoehte temperatur"], risk: "medium" },
  { id: "k_husten", name: "husten", synonyms: ["tussis"], risk: "low" },
  { id: "k_schnupfen", name: "schnupfen", synonyms: ["laufende nase"], risk: "low" },
  { id: "k_kopfschmerz", name: "kopfschmerz", synonyms: ["kopfweh", "cephalgie"], risk: "low" },
  { id: "k_bauchschmerz", name: "bauchschmerz", synonyms: ["bauchweh", "abdominalschmerz"], risk: "medium" },
  { id: "k_oberbauchschmerz", name: "oberbauchschmerz", synonyms: [], parent: "k_bauchschmerz", risk: "medium" },
  { id: "k_unterbauchschmerz", name: "unterbauchschmerz", synonyms: [], parent: "k_bauchschmerz", risk: "medium" },
  { id: "k_uebelkeit", name: "uebelkeit", synonyms: ["nausea"], risk: "medium" },
  { id: "k_durchfall", name: "durchfall", synonyms: ["diarrhoe"], risk: "medium" },
  { id: "k_brustschmerz", name: "brustschmerz", synonyms: ["thoraxschmerz"], redFlag: true, risk: "high" },
  { id: "k_atemnot", name: "atemnot", synonyms: ["dyspnoe", "luftnot"], redFlag: true, risk: "high" },
  { id: "k_regelschmerz", name: "regelschmerz", synonyms: ["dysmenorrhoe"], femaleOnly: true, risk: "low" },
  { id: "k_hodenschmerz", name: "hodenschmerz", synonyms: [], maleOnly: true, redFlag: true, risk: "high" },
  { id: "k_muedigkeit", name: "muedigkeit", synonyms: ["erschoepfung"], risk: "low" },
];

const BY_ID = new Map(CONCEPTS.map((c) => [c.id, c]));
const QUESTION_BUDGET = 10;

interface MockSession {
  id: string;
  age: number;
  gender: Gender;
  affirmed: string[];
  denied: string[];
  queue: string[];
  pending: string | null;
  budget: number;
  status: StepResponse["status"];
  expired: boolean;
}

function descendants(conceptId: string): string[] {
  const direct = CONCEPTS.filter((c) => c.parent === conceptId).map((c) => c.id);
  return direct.concat(direct.flatMap(descendants));
}

function question(conceptId: string): QuestionPayload {
  const concept = BY_ID.get(conceptId);
  if (!concept) throw new ApiError(500, `mock concept ${conceptId} missing`);
  return {
    concept_id: concept.id,
    name: concept.name,
    text: `Haben Sie ${concept.name}?`,
  };
}

export class MockTriageApi implements TriageApi {
  private sessions = new Map<string, MockSession>();
  private counter = 0;
  /** Artificial response delay in ms so spinner behavior is testable. */
  delayMs = 0;

  private async delay(): Promise<void> {
    if (this.delayMs > 0) {
      await new Promise((resolve) => setTimeout(resolve, this.delayMs));
    }
  }

  async health(): Promise<HealthPayload> {
    await this.delay();
    return { status: "ok", version: "mock", cases: CONCEPTS.length * 10 };
  }

  async searchConcepts(query: string): Promise<SearchCandidate[]> {
    await this.delay();
    const q = query.trim().toLowerCase();
    if (!q) throw new ApiError(400, "query must be non-empty");
    const out: SearchCandidate[] = [];
    for (const concept of CONCEPTS) {
      const surfaces = [concept.name, ...concept.synonyms];
      let score = 0;
      for (const surface of surfaces) {
        if (surface === q) score = Math.max(score, 3);
        else if (surface.startsWith(q)) score = Math.max(score, 2);
        else if (q.length >= 5 && surface.includes(q.slice(0, 4))) score = Math.max(score, 1);
      }
      if (score > 0) out.push({ concept_id: concept.id, name: concept.name, score });
    }
    out.sort((a, b) => b.score - a.score || a.name.localeCompare(b.name));
    return out.slice(0, 10);
  }

  async createSession(age: number, gender: Gender, concepts: string[]): Promise<StepResponse> {
    await this.delay();
    if (!Number.isInteger(age) || age < 0 || age > 120) {
      throw new ApiError(400, "age must be an integer in 0..120");
    }
    if (!["female", "male", "other"].includes(gender)) {
      throw new ApiError(400, "unknown gender");
    }
    if (!concepts.length) throw new ApiError(400, "concepts must be a non-empty list");
    for (const id of concepts) {
      if (!BY_ID.has(id)) throw new ApiError(400, `unknown concept ${id}`);
    }
    const affirmed = [...new Set(concepts)];
    const session: MockSession = {
      id: `mock-${++this.counter}-${Math.random().toString(36).slice(2, 10)}`,
      age,
      gender,
      affirmed,
      denied: [],
      queue: CONCEPTS.filter(
        (c) =>
          !affirmed.includes(c.id) &&
          !(c.femaleOnly && gender !== "female") &&
          !(c.maleOnly && gender !== "male"),
      ).map((c) => c.id),
      pending: null,
      budget: QUESTION_BUDGET,
      status: affirmed.some((id) => BY_ID.get(id)?.redFlag) ? "escalated" : "collecting",
      expired: false,
    };
    this.sessions.set(session.id, session);
    return this.step(session);
  }

  async answer(sessionId: string, conceptId: string, response: AnswerValue): Promise<StepResponse> {
    await this.delay();
    const session = this.lookup(sessionId);
    if (session.status !== "collecting") {
      throw new ApiError(409, `session is ${session.status}, not collecting`);
    }
    if (session.pending !== conceptId) {
      throw new ApiError(409, `pending question is ${session.pending}, not ${conceptId}`);
    }
    session.pending = null;
    session.budget -= 1;
    if (response === "yes") {
      session.affirmed.push(conceptId);
      if (BY_ID.get(conceptId)?.redFlag) session.status = "escalated";
    } else {
      session.denied.push(conceptId);
      const blocked = new Set([conceptId, ...descendants(conceptId)]);
      session.queue = session.queue.filter((id) => !blocked.has(id));
    }
    if (session.status === "collecting" && session.budget <= 0) {
      session.status = "concluded";
    }
    return this.step(session);
  }

  async recommendation(sessionId: string): Promise<StepResponse> {
    await this.delay();
    const session = this.lookup(sessionId);
    if (session.status === "collecting") {
      throw new ApiError(409, "session is still collecting answers");
    }
    return {
      session_id: session.id,
      status: session.status,
      recommendation: this.recommend(session),
    };
  }

  /** Test hook: make a session expired so refresh paths can be exercised. */
  expireSession(sessionId: string): void {
    const session = this.sessions.get(sessionId);
    if (session) session.expired = true;
  }

  private lookup(sessionId: string): MockSession {
    const session = this.sessions.get(sessionId);
    if (!session) throw new ApiError(404, "unknown session");
    if (session.expired) throw new ApiError(410, "session expired");
    return session;
  }

  private step(session: MockSession): StepResponse {
    if (session.status === "collecting") {
      const next = session.queue.shift();
      if (next !== undefined && session.budget > 0) {
        session.pending = next;
        return {
          session_id: session.id,
          status: "collecting",
          next_question: question(next),
        };
      }
      session.status = "concluded";
    }
    return {
      session_id: session.id,
      status: session.status,
      recommendation: this.recommend(session),
    };
  }

  private recommend(session: MockSession): RecommendationPayload {
    if (session.status === "escalated") {
      return {
        risk: "high",
        point_of_care: "emergency_call",
        time_frame: "immediate",
        confidence: 1.0,
        evidence: [],
        rationale: { basis: "red_flag" },
      };
    }
    const risks = session.affirmed.map((id) => BY_ID.get(id)?.risk ?? "low");
    const risk: Risk = risks.includes("high")
      ? "high"
      : risks.includes("medium")
        ? "medium"
        : "low";
    const care: Record<Risk, [string, string]> = {
      high: ["emergency_call", "immediate"],
      medium: ["teleconsultation", "within_24h"],
      low: ["self_care", "unscheduled"],
    };
    const names = session.affirmed
      .map((id) => BY_ID.get(id)?.name ?? id)
      .slice(0, 4);
    return {
      risk,
      point_of_care: care[risk][0],
      time_frame: care[risk][1],
      confidence: 0.6 + 0.1 * Math.min(session.affirmed.length, 4),
      evidence: [
        { case_id: "case-000101", score: 8.1, shared_symptoms: names },
        { case_id: "case-000272", score: 6.4, shared_symptoms: names.slice(0, 2) },
      ],
      rationale: { basis: "similarity" },
    };
  }
}
