import { describe, expect, it } from "vitest";

import { addNote, emptyDraft } from "../src/notes.js";
import {
  escapeHtml,
  renderCandidates,
  renderDraft,
  renderError,
  renderHistory,
  renderThemeOptions,
  renderView,
} from "../src/render.js";
import {
  buildRequest,
  newSession,
  recordGeneration,
  withDraft,
} from "../src/session.js";
import type { GenerateResponse, ThemeInfo } from "../src/types.js";

function sessionWithResult(aligned: boolean, syllables: string[]) {
  let s = newSession();
  let d = emptyDraft();
  d = addNote(d, 60, 4);
  d = addNote(d, 62, 8);
  d = addNote(d, 64, 4);
  s = withDraft(s, d);
  const res: GenerateResponse = {
    lines: [{ syllables, aligned }],
    model: "mc",
    seed: 42,
  };
  return recordGeneration(s, buildRequest(s, 1, 42), res);
}

describe("renderView", () => {
  it("is a pure function of session state", () => {
    const s = sessionWithResult(true, ["hey", "lit", "tle"]);
    expect(renderView(s)).toEqual(renderView(s));
  });

  it("places one syllable under each note", () => {
    const s = sessionWithResult(true, ["hey", "lit", "tle"]);
    const html = renderView(s).result;
    const cols = html.match(/class="col"/g) ?? [];
    expect(cols).toHaveLength(3);
    expect(html.indexOf("C4")).toBeLessThan(html.indexOf("hey"));
    expect(html).toContain("lit");
    expect(html).toContain("tle");
  });

  it("shows the aligned badge and the seed", () => {
    const html = renderView(sessionWithResult(true, ["a", "b", "c"])).result;
    expect(html).toContain("badge-ok");
    expect(html).toContain(">42<");
  });

  it("marks unaligned output and pads the extra syllables", () => {
    const html = renderView(
      sessionWithResult(false, ["a", "b", "c", "d", "e"])
    ).result;
    expect(html).toContain("badge-off");
    const cols = html.match(/class="col"/g) ?? [];
    expect(cols).toHaveLength(5);
    expect(html).toContain("col-empty");
  });
});

describe("renderDraft", () => {
  it("renders a chip with controls per note", () => {
    let d = emptyDraft();
    d = addNote(d, 60, 4);
    d = addNote(d, 62, 8);
    const html = renderDraft(d);
    expect(html).toContain('data-remove="0"');
    expect(html).toContain('data-move-left="1"');
    expect(html).toContain('data-move-right="0"');
    expect(html).toContain("C4");
    expect(html).toContain("D4");
  });

  it("shows a hint when empty", () => {
    expect(renderDraft(emptyDraft())).toContain("hint");
  });
});

describe("renderHistory", () => {
  it("marks the viewed entry and exposes navigation targets", () => {
    let s = sessionWithResult(true, ["a", "b", "c"]);
    const res: GenerateResponse = {
      lines: [{ syllables: ["x", "y", "z"], aligned: true }],
      model: "mc",
      seed: 43,
    };
    s = recordGeneration(s, buildRequest(s, 1, 43), res);
    const html = renderHistory(s);
    expect(html).toContain('data-view="0"');
    expect(html).toContain('data-view="1"');
    expect(html.match(/hist-active/g)).toHaveLength(1);
    expect(html).toContain("seed 43");
  });

  it("renders nothing before the first generation", () => {
    expect(renderHistory(newSession())).toBe("");
  });
});

describe("renderThemeOptions", () => {
  const themes: ThemeInfo[] = [
    { id: 0, label: "sea / wave / tide", top_words: ["sea", "wave", "tide"] },
    { id: 1, label: "fire / ash / ember", top_words: ["fire", "ash", "ember"] },
  ];

  it("offers a null option first", () => {
    const html = renderThemeOptions(themes, null);
    expect(html.startsWith('<option value="" selected>no theme</option>')).toBe(
      true
    );
    expect(html).toContain("sea / wave / tide");
    expect(html).toContain("fire ash ember");
  });

  it("marks the selected theme", () => {
    const html = renderThemeOptions(themes, 1);
    expect(html).toContain('<option value="1" selected>');
    expect(html).not.toContain('value="" selected');
  });
});

describe("error banner", () => {
  it("escapes the message and offers retry", () => {
    const html = renderError('<b>500</b> "boom"');
    expect(html).toContain("&lt;b&gt;500&lt;/b&gt;");
    expect(html).toContain("data-retry");
    expect(renderError(null)).toBe("");
  });
});

describe("escapeHtml", () => {
  it("escapes the four html specials", () => {
    expect(escapeHtml('<a href="x">&</a>')).toBe(
      "&lt;a href=&quot;x&quot;&gt;&amp;&lt;/a&gt;"
    );
  });
});
