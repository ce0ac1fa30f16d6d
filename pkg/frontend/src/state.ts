/** View state and the mutation protocol.
 *
 * Everything displayed derives from service responses at a single revision.
 * A 409 (stale revision) always triggers a refetch of the current state and
 * surfaces the conflict; the attempted change is never applied locally.
 */

import type {
  DendrogramPayload,
  DiffPayload,
  ExportFormat,
  FamiliesPayload,
  LoaderApi,
  PartitionPayload,
  TemplatePayload,
} from "./api.js";
import { ApiError } from "./api.js";

export type PendingAction =
  | { kind: "init"; threshold?: number }
  | { kind: "merge"; a: string; b: string }
  | { kind: "split"; a: string }
  | { kind: "rename"; id: string; name: string }
  | { kind: "keep"; id: string; note: string }
  | { kind: "edge"; src: string; dst: string; changes: [string, string][] };

export interface Conflict {
  action: PendingAction;
  detail: string;
}

export class Store {
  revision = 0;
  /** null means "use the service's suggested threshold". */
  threshold: number | null = null;
  selectedNodes: number[] = [];
  selectedFamilies: string[] = [];
  diffPair: [number, number] | null = null;
  pendingAction: PendingAction | null = null;

  dendrogram: DendrogramPayload | null = null;
  partition: PartitionPayload | null = null;
  families: FamiliesPayload | null = null;
  template: TemplatePayload | null = null;
  diff: DiffPayload | null = null;
  criteria: string[] = [];
  exportPreview: string | null = null;

  /** Conflicts surfaced so far; the UI shows the latest and re-prompts. */
  conflicts: Conflict[] = [];
  lastError: string | null = null;

  private listeners: (() => void)[] = [];

  constructor(private readonly api: LoaderApi) {}

  subscribe(listener: () => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  async load(): Promise<void> {
    this.dendrogram = await this.api.dendrogram();
    this.criteria = await this.api.criteria();
    await this.refetch();
    this.partition = await this.api.partition(this.threshold ?? undefined);
    this.emit();
  }

  /** Pull the authoritative refinement state; adopts its revision. */
  async refetch(): Promise<void> {
    const families = await this.api.families();
    this.families = families;
    this.revision = families.revision;
    this.pruneSelection();
    this.emit();
  }

  private pruneSelection(): void {
    const alive = new Set(this.families?.families.map((f) => f.id) ?? []);
    this.selectedFamilies = this.selectedFamilies.filter((id) => alive.has(id));
  }

  async setThreshold(threshold: number | null): Promise<void> {
    this.threshold = threshold;
    this.partition = await this.api.partition(threshold ?? undefined);
    this.emit();
  }

  toggleSelected(node: number): void {
    if (this.selectedNodes.includes(node)) {
      this.selectedNodes = this.selectedNodes.filter((n) => n !== node);
    } else {
      this.selectedNodes = [...this.selectedNodes, node];
    }
    this.emit();
  }

  toggleFamily(id: string): void {
    if (this.selectedFamilies.includes(id)) {
      this.selectedFamilies = this.selectedFamilies.filter((f) => f !== id);
    } else {
      this.selectedFamilies = [...this.selectedFamilies, id];
    }
    this.emit();
  }

  async loadTemplate(node: number): Promise<void> {
    this.template = await this.api.template(node);
    this.emit();
  }

  async previewExport(format: ExportFormat): Promise<void> {
    try {
      this.exportPreview = await this.api.exportLineage(format);
      this.lastError = null;
    } catch (err) {
      if (err instanceof ApiError) {
        this.lastError = err.detail;
      } else {
        throw err;
      }
    }
    this.emit();
  }

  async setDiffPair(pair: [number, number] | null): Promise<void> {
    this.diffPair = pair;
    this.diff = pair === null ? null : await this.api.diff(pair[0], pair[1]);
    this.emit();
  }

  private adopt(payload: FamiliesPayload): void {
    this.families = payload;
    this.revision = payload.revision;
    this.pruneSelection();
  }

  private async mutate(
    action: PendingAction,
    run: () => Promise<FamiliesPayload>,
  ): Promise<boolean> {
    this.pendingAction = action;
    this.lastError = null;
    this.emit();
    try {
      this.adopt(await run());
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.conflicts.push({ action, detail: err.detail });
        await this.refetch(); // never overwrite silently: show current truth
        return false;
      }
      if (err instanceof ApiError) {
        this.lastError = err.detail;
        return false;
      }
      throw err;
    } finally {
      this.pendingAction = null;
      this.emit();
    }
  }

  init(threshold?: number): Promise<boolean> {
    return this.mutate({ kind: "init", threshold }, () =>
      this.api.init(this.revision, threshold),
    );
  }

  merge(a: string, b: string): Promise<boolean> {
    return this.mutate({ kind: "merge", a, b }, () =>
      this.api.merge(this.revision, a, b),
    );
  }

  split(a: string): Promise<boolean> {
    return this.mutate({ kind: "split", a }, () => this.api.split(this.revision, a));
  }

  rename(id: string, name: string): Promise<boolean> {
    return this.mutate({ kind: "rename", id, name }, () =>
      this.api.rename(this.revision, id, name),
    );
  }

  keep(id: string, note: string): Promise<boolean> {
    return this.mutate({ kind: "keep", id, note }, () =>
      this.api.keep(this.revision, id, note),
    );
  }

  addEdge(src: string, dst: string, changes: [string, string][]): Promise<boolean> {
    return this.mutate({ kind: "edge", src, dst, changes }, () =>
      this.api.addEdge(this.revision, src, dst, changes),
    );
  }
}
