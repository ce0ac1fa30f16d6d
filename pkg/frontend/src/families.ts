/** Family list, refinement actions, and the judgment checklist beside them. */

import type { FamilyJson } from "./api.js";
import type { Store } from "./state.js";

function button(
  label: string,
  className: string,
  enabled: boolean,
  onClick: () => void,
): HTMLButtonElement {
  const el = document.createElement("button");
  el.className = className;
  el.textContent = label;
  el.disabled = !enabled;
  el.addEventListener("click", onClick);
  return el;
}

function selected(store: Store): FamilyJson[] {
  const all = store.families?.families ?? [];
  return store.selectedFamilies
    .map((id) => all.find((f) => f.id === id))
    .filter((f): f is FamilyJson => f !== undefined);
}

export function renderFamilies(container: HTMLElement, store: Store): void {
  container.replaceChildren();
  const families = store.families;
  if (!families) return;

  if (!families.initialized) {
    container.appendChild(
      button("initialize families from current cut", "init-button", true, () => {
        void store.init(store.threshold ?? undefined);
      }),
    );
    return;
  }

  const list = document.createElement("ul");
  list.className = "family-list";
  for (const family of families.families) {
    const item = document.createElement("li");
    item.dataset.id = family.id;
    item.dataset.anchor = String(family.anchor);
    const box = document.createElement("input");
    box.type = "checkbox";
    box.checked = store.selectedFamilies.includes(family.id);
    box.addEventListener("change", () => store.toggleFamily(family.id));
    const name = document.createElement("span");
    name.className = "family-name";
    name.textContent = family.display_name;
    const size = document.createElement("span");
    size.className = "family-size";
    size.textContent = `n=${family.size}`;
    item.append(box, name, size);
    if (family.notes) {
      const notes = document.createElement("span");
      notes.className = "family-notes";
      notes.textContent = family.notes;
      item.appendChild(notes);
    }
    list.appendChild(item);
  }
  container.appendChild(list);

  const picked = selected(store);
  const nLeaves = store.dendrogram?.n_leaves ?? 0;
  const actions = document.createElement("div");
  actions.className = "actions";

  actions.appendChild(
    button("merge", "action-merge", picked.length === 2, () => {
      void store.merge(picked[0].id, picked[1].id);
    }),
  );

  const splittable = picked.length === 1 && picked[0].anchor >= nLeaves;
  const split = button("split", "action-split", splittable, () => {
    void store.split(picked[0].id);
  });
  if (picked.length === 1 && !splittable) {
    split.title = "a single-log family cannot be split";
    const note = document.createElement("span");
    note.className = "action-note";
    note.textContent = "a single-log family cannot be split";
    actions.appendChild(split);
    actions.appendChild(note);
  } else {
    actions.appendChild(split);
  }

  const renameInput = document.createElement("input");
  renameInput.className = "rename-input";
  renameInput.placeholder = "new name";
  actions.appendChild(renameInput);
  actions.appendChild(
    button("rename", "action-rename", picked.length === 1, () => {
      if (renameInput.value) void store.rename(picked[0].id, renameInput.value);
    }),
  );

  const keepInput = document.createElement("input");
  keepInput.className = "keep-note";
  keepInput.placeholder = "review note";
  actions.appendChild(keepInput);
  actions.appendChild(
    button("keep", "action-keep", picked.length === 1, () => {
      void store.keep(picked[0].id, keepInput.value);
    }),
  );

  actions.appendChild(
    button("diff templates", "action-diff", picked.length === 2, () => {
      void store.setDiffPair([picked[0].anchor, picked[1].anchor]);
    }),
  );

  const edgeKind = document.createElement("select");
  edgeKind.className = "edge-kind";
  for (const kind of ["added", "removed", "modified"]) {
    const option = document.createElement("option");
    option.value = kind;
    option.textContent = kind;
    edgeKind.appendChild(option);
  }
  const edgeText = document.createElement("input");
  edgeText.className = "edge-text";
  edgeText.placeholder = "what changed";
  actions.append(edgeKind, edgeText);
  actions.appendChild(
    button("annotate edge", "action-edge", picked.length === 2, () => {
      if (edgeText.value) {
        void store.addEdge(picked[0].id, picked[1].id, [
          [edgeKind.value, edgeText.value],
        ]);
      }
    }),
  );

  container.appendChild(actions);

  const criteria = document.createElement("aside");
  criteria.className = "criteria-panel";
  const heading = document.createElement("h4");
  heading.textContent = "judgment checklist";
  criteria.appendChild(heading);
  const items = document.createElement("ul");
  for (const criterion of store.criteria) {
    const item = document.createElement("li");
    item.textContent = criterion;
    items.appendChild(item);
  }
  criteria.appendChild(items);
  container.appendChild(criteria);
}
