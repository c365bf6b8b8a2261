// Melody draft editing and client-side validation.
//
// The bounds here mirror the server's note validation exactly, so any
// draft this module accepts will never bounce off the service for
// range/shape reasons.

import type { NotePair } from "./types.js";

export const PITCH_MIN = 21;
export const PITCH_MAX = 108;
export const DURATION_MIN = 1; // sixteenths
export const DURATION_MAX = 128;

export interface MelodyDraft {
  notes: NotePair[];
  cursor: number; // insertion point for the next note
}

export function emptyDraft(): MelodyDraft {
  return { notes: [], cursor: 0 };
}

export function noteError(pitch: number, duration: number): string | null {
  if (!Number.isInteger(pitch) || pitch < PITCH_MIN || pitch > PITCH_MAX) {
    return `pitch must be an integer in ${PITCH_MIN}..${PITCH_MAX}, got ${pitch}`;
  }
  if (
    !Number.isInteger(duration) ||
    duration < DURATION_MIN ||
    duration > DURATION_MAX
  ) {
    return `duration must be an integer in ${DURATION_MIN}..${DURATION_MAX} sixteenths, got ${duration}`;
  }
  return null;
}

export function addNote(
  draft: MelodyDraft,
  pitch: number,
  duration: number
): MelodyDraft {
  const err = noteError(pitch, duration);
  if (err) {
    throw new Error(err);
  }
  const notes = draft.notes.slice();
  notes.splice(draft.cursor, 0, [pitch, duration]);
  return { notes, cursor: draft.cursor + 1 };
}

export function removeNote(draft: MelodyDraft, index: number): MelodyDraft {
  if (index < 0 || index >= draft.notes.length) {
    return draft;
  }
  const notes = draft.notes.slice();
  notes.splice(index, 1);
  const cursor = index < draft.cursor ? draft.cursor - 1 : draft.cursor;
  return { notes, cursor: Math.min(cursor, notes.length) };
}

export function moveNote(
  draft: MelodyDraft,
  from: number,
  to: number
): MelodyDraft {
  const n = draft.notes.length;
  if (from < 0 || from >= n || to < 0 || to >= n || from === to) {
    return draft;
  }
  const notes = draft.notes.slice();
  const [note] = notes.splice(from, 1);
  notes.splice(to, 0, note);
  return { notes, cursor: draft.cursor };
}

export function setCursor(draft: MelodyDraft, cursor: number): MelodyDraft {
  const clamped = Math.max(0, Math.min(cursor, draft.notes.length));
  return { notes: draft.notes, cursor: clamped };
}

/** Parse "60:4 62:8 64:4" (pitch:duration, whitespace-separated). */
export function parseMelodyText(text: string): NotePair[] {
  const tokens = text.trim().split(/\s+/).filter((t) => t.length > 0);
  if (tokens.length === 0) {
    throw new Error("melody is empty");
  }
  return tokens.map((tok, i) => {
    const m = /^(-?\d+):(-?\d+)$/.exec(tok);
    if (!m) {
      throw new Error(`token ${i} ("${tok}"): expected pitch:duration`);
    }
    const pitch = parseInt(m[1], 10);
    const duration = parseInt(m[2], 10);
    const err = noteError(pitch, duration);
    if (err) {
      throw new Error(`token ${i} ("${tok}"): ${err}`);
    }
    return [pitch, duration];
  });
}

const NAMES = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

/** MIDI pitch as a note name, e.g. 60 -> "C4". */
export function pitchName(pitch: number): string {
  const octave = Math.floor(pitch / 12) - 1;
  return `${NAMES[pitch % 12]}${octave}`;
}
