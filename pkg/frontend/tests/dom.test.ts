/**
 * DOM smoke tests (happy-dom): the three phases render, every interactive
 * element is a native focusable control (keyboard reachability), the
 * autocomplete fires at three typed characters, and the spinner only shows
 * past 300 ms.
 */

import { beforeEach, describe, expect, it, vi } from "vitest";

import { MockTriageApi } from "../src/mockApi.js";
import { SessionStore } from "../src/state.js";
import { TriageView } from "../src/ui.js";

function setup(delayMs = 0) {
  document.body.innerHTML = '<main id="app"></main>';
  const root = document.getElementById("app") as HTMLElement;
  const api = new MockTriageApi();
  api.delayMs = delayMs;
  const storage = {
    map: new Map<string, string>(),
    getItem(key: string) {
      return this.map.get(key) ?? null;
    },
    setItem(key: string, value: string) {
      this.map.set(key, value);
    },
    removeItem(key: string) {
      this.map.delete(key);
    },
  };
  const store = new SessionStore(api, storage);
  const view = new TriageView(root, api, store);
  view.start();
  return { root, api, store };
}

function interactiveElements(root: HTMLElement): HTMLElement[] {
  return Array.from(root.querySelectorAll<HTMLElement>("button, input, select, a[role=button]"));
}

async function settle() {
  await new Promise((resolve) => setTimeout(resolve, 0));
}

async function typeSearch(root: HTMLElement, text: string) {
  const search = root.querySelector("#symptom-search") as HTMLInputElement;
  search.value = text;
  search.dispatchEvent(new Event("input", { bubbles: true }));
  await settle();
}

describe("keyboard-reachable flow across all three phases", () => {
  it("drives intake -> questioning -> done with native controls only", async () => {
    const { root, store } = setup();

    // intake phase: only native controls, none opted out of the tab order
    expect(root.querySelector('[data-testid="intake"]')).not.toBeNull();
    for (const element of interactiveElements(root)) {
      expect(["BUTTON", "INPUT", "SELECT", "A"]).toContain(element.tagName);
      expect(element.getAttribute("tabindex")).not.toBe("-1");
    }

    const age = root.querySelector("#age") as HTMLInputElement;
    age.value = "34";
    age.dispatchEvent(new Event("change", { bubbles: true }));
    const gender = root.querySelector("#gender") as HTMLSelectElement;
    gender.value = "female";
    gender.dispatchEvent(new Event("change", { bubbles: true }));

    await typeSearch(root, "hus");
    const listbox = root.querySelector('[data-testid="autocomplete"]') as HTMLElement;
    expect(listbox.querySelectorAll("li").length).toBeGreaterThan(0);

    // keyboard selection: ArrowDown then Enter
    const search = root.querySelector("#symptom-search") as HTMLInputElement;
    search.dispatchEvent(new KeyboardEvent("keydown", { key: "ArrowDown", bubbles: true }));
    search.dispatchEvent(new KeyboardEvent("keydown", { key: "Enter", bubbles: true }));
    await settle();
    expect((root.querySelector('[data-testid="chips"]') as HTMLElement).textContent).toContain("husten");

    const startButton = root.querySelector('[data-testid="start-session"]') as HTMLButtonElement;
    expect(startButton.disabled).toBe(false);
    startButton.click();
    await settle();

    // questioning phase
    expect(root.querySelector('[data-testid="question"]')).not.toBeNull();
    expect(root.querySelector('[data-testid="progress"]')?.textContent).toContain("Frage 1");
    for (const element of interactiveElements(root)) {
      expect(["BUTTON", "INPUT", "SELECT", "A"]).toContain(element.tagName);
    }
    let guard = 0;
    while (store.getState().phase === "questioning" && guard++ < 25) {
      (root.querySelector('[data-testid="answer-no"]') as HTMLButtonElement).click();
      await settle();
    }

    // done phase
    expect(store.getState().phase).toBe("done");
    expect(root.querySelector('[data-testid="recommendation"]')).not.toBeNull();
    expect(root.querySelector('[data-testid="confidence"]')?.textContent).toMatch(/%$/);
    expect(root.querySelector('[data-testid="evidence"]')).not.toBeNull();
  });

  it("renders the escalation view with call-now action", async () => {
    const { root, store } = setup();
    store.setDemographics(66, "male");
    store.addConcept({ concept_id: "k_brustschmerz", name: "brustschmerz", score: 3 });
    await store.startSession();
    await settle();
    expect(root.querySelector('[data-testid="escalation"]')).not.toBeNull();
    const card = root.querySelector('[data-testid="recommendation"]') as HTMLElement;
    expect(card.classList.contains("escalated")).toBe(true);
    expect(root.querySelector("a.call-now")).not.toBeNull();
  });
});

describe("intake affordances", () => {
  it("submit stays disabled until the form is complete", async () => {
    const { root } = setup();
    const button = () => root.querySelector('[data-testid="start-session"]') as HTMLButtonElement;
    expect(button().disabled).toBe(true);
    const age = root.querySelector("#age") as HTMLInputElement;
    age.value = "40";
    age.dispatchEvent(new Event("change", { bubbles: true }));
    const gender = root.querySelector("#gender") as HTMLSelectElement;
    gender.value = "male";
    gender.dispatchEvent(new Event("change", { bubbles: true }));
    await settle();
    expect(button().disabled).toBe(true); // still no symptom selected
    await typeSearch(root, "fieb");
    const option = root.querySelector('[data-testid="autocomplete"] button') as HTMLButtonElement;
    option.click();
    await settle();
    expect(button().disabled).toBe(false);
  });

  it("autocomplete stays quiet below three characters", async () => {
    const { root } = setup();
    await typeSearch(root, "hu");
    expect(root.querySelectorAll('[data-testid="autocomplete"] li')).toHaveLength(0);
    await typeSearch(root, "hus");
    expect(root.querySelectorAll('[data-testid="autocomplete"] li').length).toBeGreaterThan(0);
  });

  it("the confidence percentage is rendered from the payload", async () => {
    const { root, store } = setup();
    store.setDemographics(30, "female");
    store.addConcept({ concept_id: "k_husten", name: "husten", score: 3 });
    await store.startSession();
    let guard = 0;
    while (store.getState().phase === "questioning" && guard++ < 25) {
      await store.answer("no");
    }
    await settle();
    const confidence = store.getState().recommendation?.confidence ?? 0;
    expect(root.querySelector('[data-testid="confidence"]')?.textContent).toContain(
      `${Math.round(confidence * 100)}%`,
    );
  });
});

describe("spinner", () => {
  it("appears only past 300 ms of an in-flight answer", async () => {
    vi.useFakeTimers();
    try {
      const { root, store } = setup(600);
      store.setDemographics(30, "female");
      store.addConcept({ concept_id: "k_husten", name: "husten", score: 3 });
      const started = store.startSession();
      await vi.advanceTimersByTimeAsync(700);
      await started;
      expect(store.getState().phase).toBe("questioning");

      const answering = store.answer("no");
      await vi.advanceTimersByTimeAsync(100);
      expect(
        root.querySelector('[data-testid="spinner"]')?.classList.contains("hidden"),
      ).toBe(true);
      await vi.advanceTimersByTimeAsync(250); // past the 300 ms threshold
      expect(
        root.querySelector('[data-testid="spinner"]')?.classList.contains("hidden"),
      ).toBe(false);
      await vi.advanceTimersByTimeAsync(400);
      await answering;
    } finally {
      vi.useRealTimers();
    }
  });
});
