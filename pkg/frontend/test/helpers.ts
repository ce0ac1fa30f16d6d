/** Small DOM helpers for scripted-browser tests under jsdom. */

export function mount(): HTMLElement {
  const root = document.createElement("div");
  document.body.appendChild(root);
  return root;
}

/** Poll until `cond` holds; the store's async mutations settle in microtasks. */
export async function until(
  cond: () => boolean,
  label: string,
  timeoutMs = 4000,
): Promise<void> {
  const start = Date.now();
  while (!cond()) {
    if (Date.now() - start > timeoutMs) {
      throw new Error(`timed out waiting for: ${label}`);
    }
    await new Promise((resolve) => setTimeout(resolve, 5));
  }
}

export function click(el: Element | null): void {
  if (!el) throw new Error("click target not found");
  el.dispatchEvent(new MouseEvent("click", { bubbles: true, cancelable: true }));
}

/** Flip a checkbox and notify listeners, as a user click would. */
export function toggle(el: Element | null): void {
  if (!el) throw new Error("checkbox not found");
  const box = el as HTMLInputElement;
  box.checked = !box.checked;
  box.dispatchEvent(new Event("change", { bubbles: true }));
}

/** Grab the cut line inside `root` and drag it to the given y position. */
export function dragCutTo(root: ParentNode, clientY: number): void {
  const svg = root.querySelector("svg.dendrogram");
  const cut = svg?.querySelector(".cut-line");
  if (!svg || !cut) throw new Error("dendrogram not rendered");
  cut.dispatchEvent(new MouseEvent("mousedown", { bubbles: true }));
  svg.dispatchEvent(new MouseEvent("mousemove", { bubbles: true, clientY }));
  svg.dispatchEvent(new MouseEvent("mouseup", { bubbles: true, clientY }));
}

export function setValue(el: Element | null, value: string): void {
  if (!el) throw new Error("input not found");
  (el as HTMLInputElement).value = value;
}

export function texts(root: ParentNode, selector: string): string[] {
  return Array.from(root.querySelectorAll(selector)).map((el) => el.textContent ?? "");
}
