// Session state: melody draft + theme selection + append-only history
// of (request, response) pairs. All transitions are pure functions so
// the view layer can re-render from state alone.

import type { GenerateRequest, GenerateResponse } from "./types.js";
import type { MelodyDraft } from "./notes.js";
import { emptyDraft } from "./notes.js";

export interface HistoryEntry {
  request: GenerateRequest;
  response: GenerateResponse;
  seed: number; // the seed the server actually used
}

export interface GenerationSession {
  draft: MelodyDraft;
  theme: number | null;
  history: HistoryEntry[];
  viewing: number; // index into history; -1 = nothing generated yet
  pending: boolean;
  error: string | null;
}

export function newSession(): GenerationSession {
  return {
    draft: emptyDraft(),
    theme: null,
    history: [],
    viewing: -1,
    pending: false,
    error: null,
  };
}

export function withDraft(
  s: GenerationSession,
  draft: MelodyDraft
): GenerationSession {
  return { ...s, draft };
}

export function withTheme(
  s: GenerationSession,
  theme: number | null
): GenerationSession {
  return { ...s, theme };
}

export function requestStarted(s: GenerationSession): GenerationSession {
  return { ...s, pending: true, error: null };
}

export function requestFailed(
  s: GenerationSession,
  message: string
): GenerationSession {
  return { ...s, pending: false, error: message };
}

/** Append a completed generation; history never rewrites past entries. */
export function recordGeneration(
  s: GenerationSession,
  request: GenerateRequest,
  response: GenerateResponse
): GenerationSession {
  const entry: HistoryEntry = { request, response, seed: response.seed };
  const history = [...s.history, entry];
  return {
    ...s,
    history,
    viewing: history.length - 1,
    pending: false,
    error: null,
  };
}

export function viewEntry(
  s: GenerationSession,
  index: number
): GenerationSession {
  if (index < 0 || index >= s.history.length) {
    return s;
  }
  return { ...s, viewing: index };
}

export function currentEntry(s: GenerationSession): HistoryEntry | null {
  return s.viewing >= 0 && s.viewing < s.history.length
    ? s.history[s.viewing]
    : null;
}

/**
 * Build the request for the next generation. A regenerate must explore,
 * so the seed is drawn fresh unless the caller pins one.
 */
export function buildRequest(
  s: GenerationSession,
  count: number,
  seed?: number
): GenerateRequest {
  return {
    notes: s.draft.notes.map((n) => [n[0], n[1]]),
    theme: s.theme,
    seed: seed ?? freshSeed(),
    count,
  };
}

export function freshSeed(): number {
  return Math.floor(Math.random() * 2 ** 31);
}
