export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

/** Seconds with a fixed point, e.g. 6.112 → "6.11s". */
export function secs(t: number): string {
  return `${t.toFixed(2)}s`;
}

/** Render one triple as a short clause, e.g. "car1 collided_with p1". */
export function tripleClause(subject: string, predicate: string, object: string): string {
  return `${subject} ${predicate} ${object}`;
}
