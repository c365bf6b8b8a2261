// DOM wiring. All state lives in one GenerationSession value; every
// mutation goes through the pure helpers and ends in render().

import { LyricApi, isAbort } from "./api.js";
import { addNote, moveNote, noteError, removeNote } from "./notes.js";
import {
  buildRequest,
  newSession,
  recordGeneration,
  requestFailed,
  requestStarted,
  viewEntry,
  withDraft,
  withTheme,
} from "./session.js";
import type { GenerationSession } from "./session.js";
import { renderThemeOptions, renderView } from "./render.js";
import type { GenerateRequest, ThemeInfo } from "./types.js";

const api = new LyricApi("");
let session: GenerationSession = newSession();
let themes: ThemeInfo[] = [];
let lastRequest: GenerateRequest | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

const pitchInput = el<HTMLInputElement>("pitch-input");
const durInput = el<HTMLInputElement>("dur-input");
const noteMsg = el<HTMLElement>("note-error");
const melodyBox = el<HTMLElement>("melody");
const themeRow = el<HTMLElement>("theme-row");
const themeSelect = el<HTMLSelectElement>("theme-select");
const countInput = el<HTMLInputElement>("count-input");
const generateBtn = el<HTMLButtonElement>("generate");
const regenerateBtn = el<HTMLButtonElement>("regenerate");
const resultsBox = el<HTMLElement>("results");
const historyBox = el<HTMLElement>("history");
const bannerBox = el<HTMLElement>("banner");
const statusBox = el<HTMLElement>("status");

function render(): void {
  const view = renderView(session);
  melodyBox.innerHTML = view.draft;
  resultsBox.innerHTML = view.result;
  historyBox.innerHTML = view.history;
  bannerBox.innerHTML = view.error;
  const busy = view.pending;
  generateBtn.disabled = busy || session.draft.notes.length === 0;
  regenerateBtn.disabled = busy || session.history.length === 0;
  generateBtn.textContent = busy ? "generating…" : "generate";
}

function update(next: GenerationSession): void {
  session = next;
  render();
}

function onAddNote(): void {
  const pitch = parseInt(pitchInput.value, 10);
  const duration = parseInt(durInput.value, 10);
  const err = noteError(pitch, duration);
  if (err) {
    noteMsg.textContent = err;
    return;
  }
  noteMsg.textContent = "";
  update(withDraft(session, addNote(session.draft, pitch, duration)));
  pitchInput.focus();
  pitchInput.select();
}

async function run(req: GenerateRequest): Promise<void> {
  lastRequest = req;
  update(requestStarted(session));
  try {
    const res = await api.generate(req);
    update(recordGeneration(session, req, res));
  } catch (err) {
    if (isAbort(err)) {
      return; // replaced by a newer request
    }
    const msg = err instanceof Error ? err.message : String(err);
    update(requestFailed(session, msg));
  }
}

function onGenerate(seed?: number): void {
  if (session.draft.notes.length === 0) {
    return;
  }
  const count = Math.max(1, Math.min(32, parseInt(countInput.value, 10) || 1));
  void run(buildRequest(session, count, seed));
}

melodyBox.addEventListener("click", (ev) => {
  const target = ev.target as HTMLElement;
  const rm = target.dataset.remove;
  const left = target.dataset.moveLeft;
  const right = target.dataset.moveRight;
  if (rm !== undefined) {
    update(withDraft(session, removeNote(session.draft, parseInt(rm, 10))));
  } else if (left !== undefined) {
    const i = parseInt(left, 10);
    update(withDraft(session, moveNote(session.draft, i, i - 1)));
  } else if (right !== undefined) {
    const i = parseInt(right, 10);
    update(withDraft(session, moveNote(session.draft, i, i + 1)));
  }
});

historyBox.addEventListener("click", (ev) => {
  const item = (ev.target as HTMLElement).closest("[data-view]");
  if (item instanceof HTMLElement && item.dataset.view !== undefined) {
    update(viewEntry(session, parseInt(item.dataset.view, 10)));
  }
});

bannerBox.addEventListener("click", (ev) => {
  const target = ev.target as HTMLElement;
  if (target.dataset.retry !== undefined && lastRequest) {
    void run(lastRequest);
  }
});

el<HTMLButtonElement>("add-note").addEventListener("click", onAddNote);
durInput.addEventListener("keydown", (ev) => {
  if (ev.key === "Enter") {
    onAddNote();
  }
});
generateBtn.addEventListener("click", () => onGenerate());
regenerateBtn.addEventListener("click", () => onGenerate());
themeSelect.addEventListener("change", () => {
  const v = themeSelect.value;
  update(withTheme(session, v === "" ? null : parseInt(v, 10)));
});

async function boot(): Promise<void> {
  try {
    const health = await api.health();
    statusBox.textContent =
      `model ready — ${health.vocab_sizes.syllables} syllables, ` +
      `${health.vocab_sizes.notes} notes`;
  } catch {
    statusBox.textContent = "service unreachable";
  }
  try {
    themes = (await api.themes()).themes;
  } catch {
    themes = [];
  }
  if (themes.length > 0) {
    themeSelect.innerHTML = renderThemeOptions(themes, session.theme);
    themeRow.hidden = false;
  } else {
    themeRow.hidden = true;
  }
  render();
}

void boot();
