/**
 * Bootstrap: pick the API (real service via ?api=<base>, otherwise the
 * mocked one so the client runs standalone), restore any persisted session,
 * then render.
 */

import { HttpTriageApi, TriageApi } from "./api.js";
import { MockTriageApi } from "./mockApi.js";
import { SessionStore } from "./state.js";
import { TriageView } from "./ui.js";

function pickApi(): TriageApi {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("api");
  if (base) return new HttpTriageApi(base.replace(/\/$/, ""));
  return new MockTriageApi();
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const api = pickApi();
  const store = new SessionStore(api, window.sessionStorage);
  const view = new TriageView(root, api, store);
  await store.restore();
  view.start();
}

void boot();
