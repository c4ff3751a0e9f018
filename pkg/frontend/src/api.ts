/**
 * Client for the five /v1 endpoints of the triage service. The UI consumes
 * nothing else; all triage decisions arrive through these payloads.
 */

export type Gender = "female" | "male" | "other";
export type Risk = "high" | "medium" | "low";
export type AnswerValue = "yes" | "no";

export interface QuestionPayload {
  concept_id: string;
  name: string;
  text: string;
}

export interface EvidenceItem {
  case_id: string;
  score: number;
  shared_symptoms: string[];
}

export interface RecommendationPayload {
  risk: Risk;
  point_of_care: string;
  time_frame: string;
  confidence: number;
  evidence: EvidenceItem[];
  rationale: Record<string, unknown>;
}

/** Response shape of session creation and answer submission. */
export interface StepResponse {
  session_id: string;
  status: "collecting" | "escalated" | "concluded";
  next_question?: QuestionPayload;
  recommendation?: RecommendationPayload;
}

export interface SearchCandidate {
  concept_id: string;
  name: string;
  score: number;
}

export interface HealthPayload {
  status: string;
  version: string;
  cases: number;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface TriageApi {
  health(): Promise<HealthPayload>;
  searchConcepts(query: string): Promise<SearchCandidate[]>;
  createSession(age: number, gender: Gender, concepts: string[]): Promise<StepResponse>;
  answer(sessionId: string, conceptId: string, response: AnswerValue): Promise<StepResponse>;
  recommendation(sessionId: string): Promise<StepResponse>;
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  let response: Response;
  try {
    response = await fetch(url, {
      headers: { "content-type": "application/json" },
      ...init,
    });
  } catch (err) {
    throw new ApiError(0, `network failure: ${String(err)}`);
  }
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    const detail = (body as { detail?: string }).detail ?? response.statusText;
    throw new ApiError(response.status, detail);
  }
  return body as T;
}

export class HttpTriageApi implements TriageApi {
  constructor(private readonly base: string) {}

  health(): Promise<HealthPayload> {
    return request(`${this.base}/v1/health`);
  }

  searchConcepts(query: string): Promise<SearchCandidate[]> {
    const q = encodeURIComponent(query);
    return request<{ candidates: SearchCandidate[] }>(
      `${this.base}/v1/concepts/search?q=${q}`,
    ).then((body) => body.candidates);
  }

  createSession(age: number, gender: Gender, concepts: string[]): Promise<StepResponse> {
    return request(`${this.base}/v1/sessions`, {
      method: "POST",
      body: JSON.stringify({ age, gender, concepts }),
    });
  }

  answer(sessionId: string, conceptId: string, response: AnswerValue): Promise<StepResponse> {
    return request(`${this.base}/v1/sessions/${sessionId}/answer`, {
      method: "POST",
      body: JSON.stringify({ concept_id: conceptId, response }),
    });
  }

  recommendation(sessionId: string): Promise<StepResponse> {
    return request<{ session_id: string; status: StepResponse["status"]; recommendation: RecommendationPayload }>(
      `${this.base}/v1/sessions/${sessionId}/recommendation`,
    ).then((body) => ({
      session_id: body.session_id,
      status: body.status,
      recommendation: body.recommendation,
    }));
  }
}
