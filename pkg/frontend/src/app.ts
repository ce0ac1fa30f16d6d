/** Wires the panes together over one Store. */

import type { LoaderApi } from "./api.js";
import { DEFAULT_EXPAND_DEPTH, renderDendrogram } from "./dendrogram.js";
import { renderFamilies } from "./families.js";
import { Store } from "./state.js";
import { renderDiff, renderTemplate } from "./templates.js";

export class App {
  readonly store: Store;
  private readonly expandedNodes = new Set<number>();
  private readonly panes: {
    banner: HTMLElement;
    header: HTMLElement;
    dendrogram: HTMLElement;
    template: HTMLElement;
    diff: HTMLElement;
    families: HTMLElement;
    exportPreview: HTMLPreElement;
  };

  constructor(
    root: HTMLElement,
    api: LoaderApi,
    private readonly expandDepth = DEFAULT_EXPAND_DEPTH,
  ) {
    this.store = new Store(api);
    root.replaceChildren();
    root.className = "llt-app";

    const header = document.createElement("header");
    const banner = document.createElement("div");
    banner.className = "banner-slot";
    const main = document.createElement("main");
    const dendrogram = document.createElement("section");
    dendrogram.className = "dendrogram-pane";
    const template = document.createElement("section");
    template.className = "template-pane";
    const diff = document.createElement("section");
    diff.className = "diff-pane";
    const families = document.createElement("aside");
    families.className = "families-pane";
    main.append(dendrogram, template, diff, families);

    const exporter = document.createElement("section");
    exporter.className = "export-pane";
    const previewButton = document.createElement("button");
    previewButton.className = "export-button";
    previewButton.textContent = "preview lineage (dot)";
    previewButton.addEventListener("click", () => {
      void this.store.previewExport("dot");
    });
    const exportPreview = document.createElement("pre");
    exportPreview.className = "export-preview";
    exporter.append(previewButton, exportPreview);

    root.append(header, banner, main, exporter);
    this.panes = { banner, header, dendrogram, template, diff, families, exportPreview };
    this.store.subscribe(() => this.render());
  }

  async start(): Promise<void> {
    await this.store.load();
  }

  private render(): void {
    const store = this.store;
    this.panes.header.textContent =
      `revision ${store.revision}` +
      (store.partition
        ? ` · cut at ${store.partition.threshold.toPrecision(4)}` +
          ` · ${store.partition.groups.length} groups` +
          ` (suggested ${store.partition.suggested.toPrecision(4)})`
        : "");

    this.renderBanner();

    if (store.dendrogram && store.partition) {
      renderDendrogram(this.panes.dendrogram, store.dendrogram, store.partition, {
        threshold: store.partition.threshold,
        expandDepth: this.expandDepth,
        expanded: this.expandedNodes,
        onCutDrag: (threshold) => {
          void store.setThreshold(threshold);
        },
        onSelectNode: (node) => {
          store.toggleSelected(node);
          void store.loadTemplate(node);
        },
        onExpand: (node) => {
          this.expandedNodes.add(node);
          this.render();
        },
      });
    }

    renderTemplate(this.panes.template, store.template);
    renderDiff(this.panes.diff, store.diff);
    renderFamilies(this.panes.families, store);
    this.panes.exportPreview.textContent = store.exportPreview ?? "";
  }

  private renderBanner(): void {
    const { banner } = this.panes;
    banner.replaceChildren();
    const conflict = this.store.conflicts.at(-1);
    if (conflict) {
      const box = document.createElement("div");
      box.className = "conflict-banner";
      box.textContent =
        `conflict: ${conflict.detail} — the view was refreshed; ` +
        `re-apply "${conflict.action.kind}" if it still makes sense`;
      banner.appendChild(box);
    }
    if (this.store.lastError) {
      const box = document.createElement("div");
      box.className = "error-banner";
      box.textContent = this.store.lastError;
      banner.appendChild(box);
    }
  }
}
