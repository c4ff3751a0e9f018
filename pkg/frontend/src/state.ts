/**
 * Session state store. The UI never computes triage logic: every phase
 * transition is an echo of a server response, applied in exactly one place
 * (applyStep). The session id and the last server payload live in volatile
 * client storage so a refresh restores the exact server state.
 */

import {
  AnswerValue,
  ApiError,
  Gender,
  QuestionPayload,
  RecommendationPayload,
  SearchCandidate,
  StepResponse,
  TriageApi,
} from "./api.js";

export type Phase = "intake" | "questioning" | "done";

export interface HistoryEntry {
  question: QuestionPayload;
  response: AnswerValue;
}

export interface UiSessionState {
  phase: Phase;
  sessionId: string | null;
  demographics: { age: number | null; gender: Gender | null };
  enteredConcepts: SearchCandidate[];
  currentQuestion: QuestionPayload | null;
  history: HistoryEntry[];
  recommendation: RecommendationPayload | null;
  escalated: boolean;
  questionsAnswered: number;
  busy: boolean;
  error: string | null;
}

export interface KeyValueStorage {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

const STORAGE_KEY = "triagekit.session";

interface PersistedSession {
  sessionId: string;
  step: StepResponse;
  demographics: UiSessionState["demographics"];
  enteredConcepts: SearchCandidate[];
  history: HistoryEntry[];
}

function initialState(): UiSessionState {
  return {
    phase: "intake",
    sessionId: null,
    demographics: { age: null, gender: null },
    enteredConcepts: [],
    currentQuestion: null,
    history: [],
    recommendation: null,
    escalated: false,
    questionsAnswered: 0,
    busy: false,
    error: null,
  };
}

export class SessionStore {
  private state: UiSessionState = initialState();
  private listeners = new Set<(state: UiSessionState) => void>();

  constructor(
    private readonly api: TriageApi,
    private readonly storage: KeyValueStorage,
  ) {}

  getState(): UiSessionState {
    return this.state;
  }

  subscribe(listener: (state: UiSessionState) => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(partial: Partial<UiSessionState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) listener(this.state);
  }

  // -- intake ---------------------------------------------------------------

  addConcept(candidate: SearchCandidate): void {
    if (this.state.phase !== "intake") return;
    if (this.state.enteredConcepts.some((c) => c.concept_id === candidate.concept_id)) return;
    this.emit({ enteredConcepts: [...this.state.enteredConcepts, candidate] });
  }

  removeConcept(conceptId: string): void {
    if (this.state.phase !== "intake") return;
    this.emit({
      enteredConcepts: this.state.enteredConcepts.filter((c) => c.concept_id !== conceptId),
    });
  }

  setDemographics(age: number | null, gender: Gender | null): void {
    if (this.state.phase !== "intake") return;
    this.emit({ demographics: { age, gender } });
  }

  canSubmitIntake(): boolean {
    const { age, gender } = this.state.demographics;
    return (
      this.state.phase === "intake" &&
      !this.state.busy &&
      age !== null &&
      gender !== null &&
      this.state.enteredConcepts.length > 0
    );
  }

  async startSession(): Promise<void> {
    if (!this.canSubmitIntake()) return;
    const { age, gender } = this.state.demographics;
    this.emit({ busy: true, error: null });
    try {
      const step = await this.api.createSession(
        age as number,
        gender as Gender,
        this.state.enteredConcepts.map((c) => c.concept_id),
      );
      this.applyStep(step);
    } catch (err) {
      this.fail(err);
    }
  }

  // -- questioning ----------------------------------------------------------

  async answer(response: AnswerValue): Promise<void> {
    const question = this.state.currentQuestion;
    // busy doubles as the idempotent guard: a second click while a request
    // is in flight is a no-op
    if (this.state.phase !== "questioning" || question === null || this.state.busy) return;
    this.emit({ busy: true, error: null });
    try {
      const step = await this.api.answer(
        this.state.sessionId as string,
        question.concept_id,
        response,
      );
      this.emit({
        history: [...this.state.history, { question, response }],
        questionsAnswered: this.state.questionsAnswered + 1,
      });
      this.applyStep(step);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        await this.resync();
        return;
      }
      this.fail(err);
    }
  }

  /** After a protocol-order error the server state wins: reload it. */
  private async resync(): Promise<void> {
    const sessionId = this.state.sessionId;
    if (!sessionId) {
      this.emit(initialState());
      return;
    }
    try {
      const step = await this.api.recommendation(sessionId);
      this.applyStep(step);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // still collecting; the persisted pending question remains valid
        this.emit({ busy: false, error: null });
        return;
      }
      this.fail(err);
    }
  }

  // -- shared ---------------------------------------------------------------

  /** The single place where server responses drive phase transitions. */
  private applyStep(step: StepResponse): void {
    const updates: Partial<UiSessionState> = {
      sessionId: step.session_id,
      busy: false,
      error: null,
    };
    if (step.recommendation) {
      updates.phase = "done";
      updates.currentQuestion = null;
      updates.recommendation = step.recommendation;
      updates.escalated = step.status === "escalated";
    } else if (step.next_question) {
      updates.phase = "questioning";
      updates.currentQuestion = step.next_question;
    }
    this.emit(updates);
    this.persist(step);
  }

  private fail(err: unknown): void {
    const message = err instanceof Error ? err.message : String(err);
    this.emit({ busy: false, error: message });
  }

  clearError(): void {
    this.emit({ error: null });
  }

  reset(): void {
    this.storage.removeItem(STORAGE_KEY);
    this.emit(initialState());
  }

  // -- persistence ------------------------------------------------------------

  private persist(step: StepResponse): void {
    const snapshot: PersistedSession = {
      sessionId: step.session_id,
      step,
      demographics: this.state.demographics,
      enteredConcepts: this.state.enteredConcepts,
      history: this.state.history,
    };
    this.storage.setItem(STORAGE_KEY, JSON.stringify(snapshot));
  }

  /**
   * Restore after a refresh: re-apply the last server payload, then verify
   * finished sessions against the server (it stays authoritative). Returns
   * true when a session was restored.
   */
  async restore(): Promise<boolean> {
    const raw = this.storage.getItem(STORAGE_KEY);
    if (!raw) return false;
    let snapshot: PersistedSession;
    try {
      snapshot = JSON.parse(raw) as PersistedSession;
    } catch {
      this.storage.removeItem(STORAGE_KEY);
      return false;
    }
    this.emit({
      demographics: snapshot.demographics,
      enteredConcepts: snapshot.enteredConcepts,
      history: snapshot.history,
      questionsAnswered: snapshot.history.length,
    });
    if (snapshot.step.recommendation) {
      try {
        const fresh = await this.api.recommendation(snapshot.sessionId);
        this.applyStep(fresh);
      } catch (err) {
        if (err instanceof ApiError && (err.status === 404 || err.status === 410)) {
          this.reset();
          return false;
        }
        this.applyStep(snapshot.step); // offline: show the persisted result
      }
    } else {
      this.applyStep(snapshot.step);
    }
    return true;
  }
}
