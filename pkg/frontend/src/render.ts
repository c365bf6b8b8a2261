// Pure view builders: session state in, HTML strings out. No DOM access
// here, so the whole layer is unit-testable and the same state always
// yields the same markup.

import type { GenerationSession, HistoryEntry } from "./session.js";
import type { MelodyDraft } from "./notes.js";
import { pitchName } from "./notes.js";
import type { GeneratedLine, NotePair, ThemeInfo } from "./types.js";

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderDraft(draft: MelodyDraft): string {
  if (draft.notes.length === 0) {
    return '<p class="hint">No notes yet — add pitch and duration above.</p>';
  }
  const chips = draft.notes
    .map((n, i) => {
      const [pitch, duration] = n;
      return (
        `<span class="chip" data-index="${i}">` +
        `<span class="chip-note">${escapeHtml(pitchName(pitch))}</span>` +
        `<span class="chip-dur">${duration}</span>` +
        `<button type="button" class="chip-left" data-move-left="${i}" title="move left">&#8592;</button>` +
        `<button type="button" class="chip-right" data-move-right="${i}" title="move right">&#8594;</button>` +
        `<button type="button" class="chip-x" data-remove="${i}" title="remove">&times;</button>` +
        `</span>`
      );
    })
    .join("");
  return `<div class="chips">${chips}</div>`;
}

function renderLine(notes: NotePair[], line: GeneratedLine): string {
  const width = Math.max(notes.length, line.syllables.length);
  const cols: string[] = [];
  for (let i = 0; i < width; i++) {
    const note = i < notes.length ? notes[i] : null;
    const syl = i < line.syllables.length ? line.syllables[i] : "";
    const head = note
      ? `<span class="col-note">${escapeHtml(pitchName(note[0]))}</span>` +
        `<span class="col-dur">${note[1]}</span>`
      : `<span class="col-note col-empty">&middot;</span>`;
    cols.push(
      `<span class="col">${head}<span class="col-syl">${escapeHtml(syl)}</span></span>`
    );
  }
  const badge = line.aligned
    ? '<span class="badge badge-ok">aligned</span>'
    : '<span class="badge badge-off">unaligned</span>';
  return `<div class="line">${badge}<div class="cols">${cols.join("")}</div></div>`;
}

export function renderCandidates(entry: HistoryEntry): string {
  const lines = entry.response.lines
    .map((line) => renderLine(entry.request.notes, line))
    .join("");
  const theme =
    entry.request.theme === null ? "" : ` &middot; theme ${entry.request.theme}`;
  return (
    `<div class="result-meta">model ${escapeHtml(entry.response.model)}` +
    ` &middot; seed <code>${entry.seed}</code>${theme}</div>` +
    lines
  );
}

export function renderHistory(session: GenerationSession): string {
  if (session.history.length === 0) {
    return "";
  }
  const items = session.history
    .map((entry, i) => {
      const cls = i === session.viewing ? "hist-item hist-active" : "hist-item";
      const first = entry.response.lines[0];
      const preview = first ? first.syllables.join(" ") : "(empty)";
      return (
        `<li class="${cls}" data-view="${i}">` +
        `<span class="hist-seed">#${i + 1} seed ${entry.seed}</span> ` +
        `<span class="hist-preview">${escapeHtml(preview)}</span></li>`
      );
    })
    .join("");
  return `<ol class="history">${items}</ol>`;
}

export function renderThemeOptions(
  themes: ThemeInfo[],
  selected: number | null
): string {
  const none =
    `<option value=""${selected === null ? " selected" : ""}>no theme</option>`;
  const opts = themes
    .map((t) => {
      const sel = selected === t.id ? " selected" : "";
      const words = t.top_words.slice(0, 3).join(" ");
      return `<option value="${t.id}"${sel}>${escapeHtml(t.label)} (${escapeHtml(words)})</option>`;
    })
    .join("");
  return none + opts;
}

export function renderError(message: string | null): string {
  if (!message) {
    return "";
  }
  return (
    `<div class="banner">${escapeHtml(message)} ` +
    `<button type="button" data-retry="1">retry</button></div>`
  );
}

export interface View {
  draft: string;
  result: string;
  history: string;
  error: string;
  pending: boolean;
}

/** The full view for a session; same state always gives the same View. */
export function renderView(session: GenerationSession): View {
  const entry =
    session.viewing >= 0 && session.viewing < session.history.length
      ? session.history[session.viewing]
      : null;
  return {
    draft: renderDraft(session.draft),
    result: entry ? renderCandidates(entry) : "",
    history: renderHistory(session),
    error: renderError(session.error),
    pending: session.pending,
  };
}
