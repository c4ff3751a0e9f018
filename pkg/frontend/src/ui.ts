/**
 * DOM rendering: chat-style single-card layout. One render function per
 * phase; all interactive elements are native buttons/inputs/selects so the
 * whole flow is keyboard-reachable. Inputs are disabled while a request is
 * in flight; the spinner only appears past 300 ms.
 */

import { Gender, SearchCandidate, TriageApi } from "./api.js";
import { SessionStore, UiSessionState } from "./state.js";

const SPINNER_DELAY_MS = 300;

const RISK_LABEL: Record<string, string> = {
  high: "Hohes Risiko",
  medium: "Mittleres Risiko",
  low: "Niedriges Risiko",
};

const CARE_LABEL: Record<string, string> = {
  emergency_call: "Rufen Sie sofort den Telecare-Dienst an",
  teleconsultation: "Telekonsultation vereinbaren",
  physical_visit: "Arztpraxis aufsuchen",
  self_care: "Selbstversorgung zu Hause",
};

const TIME_LABEL: Record<string, string> = {
  immediate: "sofort",
  within_24h: "innerhalb von 24 Stunden",
  within_week: "innerhalb einer Woche",
  unscheduled: "ohne festen Termin",
};

export class TriageView {
  private root: HTMLElement;
  private spinnerTimer: number | null = null;
  private searchSeq = 0;
  private candidates: SearchCandidate[] = [];
  private highlighted = -1;

  constructor(
    root: HTMLElement,
    private readonly api: TriageApi,
    private readonly store: SessionStore,
  ) {
    this.root = root;
    store.subscribe((state) => this.render(state));
  }

  start(): void {
    this.render(this.store.getState());
  }

  private render(state: UiSessionState): void {
    this.root.textContent = "";
    this.root.append(this.banner(state));
    if (state.phase === "intake") {
      this.root.append(this.intakeCard(state));
    } else if (state.phase === "questioning") {
      this.root.append(this.questionCard(state));
    } else {
      this.root.append(this.recommendationCard(state));
    }
    this.scheduleSpinner(state);
  }

  private banner(state: UiSessionState): HTMLElement {
    const banner = el("div", { class: "banner", role: "status" });
    if (state.error) {
      banner.classList.add("banner-error");
      banner.append(el("span", {}, `Fehler: ${state.error}`));
      const retry = el("button", { type: "button", "data-testid": "retry" }, "Erneut versuchen");
      retry.addEventListener("click", () => this.store.clearError());
      banner.append(retry);
    }
    return banner;
  }

  // -- intake ---------------------------------------------------------------

  private intakeCard(state: UiSessionState): HTMLElement {
    const card = el("section", { class: "card", "data-testid": "intake" });
    card.append(el("h2", {}, "Beschwerden erfassen"));

    const ageField = el("input", {
      id: "age",
      type: "number",
      min: "0",
      max: "120",
      "aria-label": "Alter",
      value: state.demographics.age?.toString() ?? "",
    }) as HTMLInputElement;
    const genderField = el("select", { id: "gender", "aria-label": "Geschlecht" }) as HTMLSelectElement;
    genderField.append(el("option", { value: "" }, "Bitte wählen"));
    for (const [value, label] of [
      ["female", "weiblich"],
      ["male", "männlich"],
      ["other", "divers"],
    ]) {
      genderField.append(el("option", { value: value as string }, label as string));
    }
    genderField.value = state.demographics.gender ?? "";
    const syncDemographics = () => {
      const age = ageField.value === "" ? null : Number(ageField.value);
      const gender = (genderField.value || null) as Gender | null;
      this.store.setDemographics(Number.isFinite(age as number) ? age : null, gender);
    };
    ageField.addEventListener("change", syncDemographics);
    genderField.addEventListener("change", syncDemographics);

    card.append(labelled("Alter", ageField), labelled("Geschlecht", genderField));

    const chipRow = el("div", { class: "chips", "data-testid": "chips" });
    for (const concept of state.enteredConcepts) {
      const chip = el("button", {
        type: "button",
        class: "chip",
        "aria-label": `${concept.name} entfernen`,
      }, `${concept.name} ✕`);
      chip.addEventListener("click", () => this.store.removeConcept(concept.concept_id));
      chipRow.append(chip);
    }
    card.append(chipRow);

    const search = el("input", {
      id: "symptom-search",
      type: "text",
      role: "combobox",
      "aria-label": "Symptom suchen",
      "aria-expanded": "false",
      autocomplete: "off",
      placeholder: "Symptom eingeben, z.B. bauchweh",
    }) as HTMLInputElement;
    const listbox = el("ul", { class: "autocomplete", role: "listbox", "data-testid": "autocomplete" });
    search.addEventListener("input", () => void this.runSearch(search, listbox));
    search.addEventListener("keydown", (event) => this.searchKeys(event as KeyboardEvent, search, listbox));
    card.append(labelled("Symptome", search), listbox);

    const submit = el(
      "button",
      { type: "button", class: "primary", "data-testid": "start-session" },
      "Einschätzung starten",
    ) as HTMLButtonElement;
    submit.disabled = !this.store.canSubmitIntake();
    submit.addEventListener("click", () => void this.store.startSession());
    card.append(submit);
    return card;
  }

  private async runSearch(input: HTMLInputElement, listbox: HTMLElement): Promise<void> {
    const query = input.value.trim();
    this.highlighted = -1;
    if (query.length < 3) {
      this.candidates = [];
      this.paintCandidates(input, listbox);
      return;
    }
    const seq = ++this.searchSeq;
    try {
      const candidates = await this.api.searchConcepts(query);
      if (seq !== this.searchSeq) return; // stale response
      this.candidates = candidates;
    } catch {
      this.candidates = [];
    }
    this.paintCandidates(input, listbox);
  }

  private paintCandidates(input: HTMLInputElement, listbox: HTMLElement): void {
    listbox.textContent = "";
    input.setAttribute("aria-expanded", this.candidates.length ? "true" : "false");
    this.candidates.forEach((candidate, index) => {
      const item = el(
        "li",
        {
          role: "option",
          class: index === this.highlighted ? "highlighted" : "",
          "data-concept": candidate.concept_id,
        },
      );
      const button = el("button", { type: "button" }, candidate.name);
      button.addEventListener("click", () => {
        this.store.addConcept(candidate);
        input.value = "";
        this.candidates = [];
      });
      item.append(button);
      listbox.append(item);
    });
  }

  private searchKeys(event: KeyboardEvent, input: HTMLInputElement, listbox: HTMLElement): void {
    if (!this.candidates.length) return;
    if (event.key === "ArrowDown") {
      event.preventDefault();
      this.highlighted = (this.highlighted + 1) % this.candidates.length;
      this.paintCandidates(input, listbox);
    } else if (event.key === "ArrowUp") {
      event.preventDefault();
      this.highlighted =
        (this.highlighted - 1 + this.candidates.length) % this.candidates.length;
      this.paintCandidates(input, listbox);
    } else if (event.key === "Enter" && this.highlighted >= 0) {
      event.preventDefault();
      const candidate = this.candidates[this.highlighted];
      if (candidate) {
        this.store.addConcept(candidate);
        input.value = "";
        this.candidates = [];
        this.paintCandidates(input, listbox);
      }
    } else if (event.key === "Escape") {
      this.candidates = [];
      this.paintCandidates(input, listbox);
    }
  }

  // -- questioning ------------------------------------------------------------

  private questionCard(state: UiSessionState): HTMLElement {
    const card = el("section", { class: "card", "data-testid": "question" });
    card.append(
      el("p", { class: "progress", "data-testid": "progress" }, `Frage ${state.questionsAnswered + 1}`),
      el("h2", { "data-testid": "question-text" }, state.currentQuestion?.text ?? ""),
    );
    const yes = el("button", { type: "button", class: "primary", "data-testid": "answer-yes" }, "Ja") as HTMLButtonElement;
    const no = el("button", { type: "button", "data-testid": "answer-no" }, "Nein") as HTMLButtonElement;
    yes.disabled = no.disabled = state.busy;
    yes.addEventListener("click", () => void this.store.answer("yes"));
    no.addEventListener("click", () => void this.store.answer("no"));
    card.append(el("div", { class: "answers" }, yes, no));
    card.append(el("div", { class: "spinner hidden", "data-testid": "spinner" }, "…"));
    return card;
  }

  // -- recommendation -----------------------------------------------------------

  private recommendationCard(state: UiSessionState): HTMLElement {
    const rec = state.recommendation;
    const card = el("section", { class: "card", "data-testid": "recommendation" });
    if (!rec) {
      card.append(el("p", {}, "Keine Empfehlung verfügbar."));
      return card;
    }
    card.classList.add(`risk-${rec.risk}`);
    if (state.escalated) {
      card.classList.add("escalated");
      card.append(el("h2", { "data-testid": "escalation" }, "Bitte rufen Sie sofort den Telecare-Dienst an!"));
      const call = el("a", { href: "tel:+00000000", class: "primary call-now", role: "button" }, "Jetzt anrufen");
      card.append(call);
    } else {
      card.append(el("h2", {}, RISK_LABEL[rec.risk] ?? rec.risk));
    }
    card.append(
      el("p", { "data-testid": "care" }, CARE_LABEL[rec.point_of_care] ?? rec.point_of_care),
      el("p", { "data-testid": "time-frame" }, `Zeitrahmen: ${TIME_LABEL[rec.time_frame] ?? rec.time_frame}`),
      el(
        "p",
        { "data-testid": "confidence" },
        `Sicherheit: ${Math.round(rec.confidence * 100)}%`,
      ),
    );
    if (rec.evidence.length) {
      card.append(el("h3", {}, "Ähnliche anonymisierte Fälle"));
      const list = el("ul", { class: "evidence", "data-testid": "evidence" });
      for (const item of rec.evidence) {
        list.append(
          el(
            "li",
            {},
            `Fall ${item.case_id.slice(-4)}: gemeinsame Symptome ${item.shared_symptoms.join(", ") || "–"}`,
          ),
        );
      }
      card.append(list);
    }
    const restart = el("button", { type: "button", "data-testid": "restart" }, "Neue Einschätzung");
    restart.addEventListener("click", () => this.store.reset());
    card.append(restart);
    return card;
  }

  private scheduleSpinner(state: UiSessionState): void {
    if (this.spinnerTimer !== null) {
      clearTimeout(this.spinnerTimer);
      this.spinnerTimer = null;
    }
    if (!state.busy) return;
    this.spinnerTimer = setTimeout(() => {
      const spinner = this.root.querySelector('[data-testid="spinner"]');
      spinner?.classList.remove("hidden");
    }, SPINNER_DELAY_MS) as unknown as number;
  }
}

function el(
  tag: string,
  attrs: Record<string, string> = {},
  ...children: (string | HTMLElement)[]
): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (value !== "") node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child instanceof HTMLElement ? child : document.createTextNode(child));
  }
  return node;
}

function labelled(text: string, field: HTMLElement): HTMLElement {
  const wrap = el("label", { class: "field" });
  wrap.append(el("span", {}, text), field);
  return wrap;
}
