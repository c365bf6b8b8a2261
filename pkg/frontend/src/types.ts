// Mirror of the lyric service's request/response shapes.

export type NotePair = [pitch: number, duration: number];

export interface GenerateRequest {
  notes: NotePair[];
  theme: number | null;
  seed: number | null;
  count: number;
}

export interface GeneratedLine {
  syllables: string[];
  aligned: boolean;
}

export interface GenerateResponse {
  lines: GeneratedLine[];
  model: string;
  seed: number;
}

export interface ThemeInfo {
  id: number;
  label: string;
  top_words: string[];
}

export interface ThemesResponse {
  themes: ThemeInfo[];
}

export interface HealthResponse {
  status: string;
  checkpoint: string;
  vocab_sizes: { syllables: number; notes: number };
}

export interface FieldError {
  field: string;
  message: string;
}

export function isFieldErrorList(detail: unknown): detail is FieldError[] {
  return (
    Array.isArray(detail) &&
    detail.every(
      (d) =>
        typeof d === "object" &&
        d !== null &&
        typeof (d as FieldError).message === "string"
    )
  );
}
