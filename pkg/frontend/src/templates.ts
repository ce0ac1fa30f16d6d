/** Template and template-diff panes.
 *
 * Diff rows reproduce the service's change labels verbatim — the client
 * never realigns or recomputes anything.
 */

import type { DiffPayload, TemplatePayload } from "./api.js";

export const PLACEHOLDER = "«*»";

export function renderTemplate(
  container: HTMLElement,
  payload: TemplatePayload | null,
): void {
  container.replaceChildren();
  if (!payload) {
    const hint = document.createElement("p");
    hint.className = "hint";
    hint.textContent = "select a node to inspect its template";
    container.appendChild(hint);
    return;
  }
  const heading = document.createElement("h3");
  heading.textContent = `template of node ${payload.node}`;
  container.appendChild(heading);
  const row = document.createElement("div");
  row.className = "template";
  for (const slotText of payload.slots) {
    const slot = document.createElement("code");
    if (slotText === null) {
      slot.className = "slot placeholder";
      slot.textContent = PLACEHOLDER;
    } else {
      slot.className = "slot literal";
      slot.textContent = slotText;
    }
    row.appendChild(slot);
  }
  container.appendChild(row);
}

export function renderDiff(container: HTMLElement, diff: DiffPayload | null): void {
  container.replaceChildren();
  if (!diff) return;
  const heading = document.createElement("h3");
  heading.textContent = `template changes ${diff.a} → ${diff.b}`;
  container.appendChild(heading);
  if (diff.changes.length === 0) {
    const same = document.createElement("p");
    same.className = "hint";
    same.textContent = "templates are identical";
    container.appendChild(same);
    return;
  }
  const list = document.createElement("ul");
  list.className = "diff";
  for (const change of diff.changes) {
    const item = document.createElement("li");
    item.className = `change ${change.kind}`;
    item.textContent = change.label; // verbatim from the service
    list.appendChild(item);
  }
  container.appendChild(list);
}
