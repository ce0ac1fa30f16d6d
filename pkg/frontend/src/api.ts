/** Typed client for the analysis service. The UI talks to nothing else. */

export interface LogSummary {
  id: string;
  source_host: string;
  captured_at: string;
  size: number;
}

export interface CorpusPayload {
  count: number;
  provenance: string;
  logs: LogSummary[];
}

export interface LogDetail extends LogSummary {
  leaf: number;
  raw_b64: string;
  preview: string;
}

export interface MergeRow {
  left: number;
  right: number;
  height: number;
  size: number;
}

export interface DendrogramPayload {
  n_leaves: number;
  leaves: string[];
  total_merges: number;
  offset: number;
  suggested_threshold: number;
  merges: MergeRow[];
}

export interface TemplatePayload {
  node: number;
  slots: (string | null)[];
  rendered: string;
}

export interface MembersPayload {
  node: number;
  size: number;
  members: number[];
  ids: string[];
}

export interface PartitionPayload {
  threshold: number;
  suggested: number;
  groups: number[][];
  anchors: number[];
  labels: number[];
}

export type ChangeKind = "added" | "removed" | "modified";

export interface DiffChange {
  kind: ChangeKind;
  removed: (string | null)[];
  added: (string | null)[];
  label: string;
}

export interface DiffPayload {
  a: number;
  b: number;
  changes: DiffChange[];
}

export interface FamilyJson {
  id: string;
  name: string;
  display_name: string;
  members: number[];
  anchor: number;
  notes: string;
  size: number;
}

export interface LineageEdgeJson {
  src: string;
  dst: string;
  changes: [string, string][];
}

export interface FamiliesPayload {
  revision: number;
  initialized: boolean;
  families: FamilyJson[];
  lineage_edges: LineageEdgeJson[];
  history_len: number;
}

export type ExportFormat = "dot" | "newick" | "json";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

/** Everything the console needs from the service, one method per endpoint. */
export interface LoaderApi {
  corpus(): Promise<CorpusPayload>;
  log(id: string): Promise<LogDetail>;
  dendrogram(): Promise<DendrogramPayload>;
  template(node: number): Promise<TemplatePayload>;
  members(node: number): Promise<MembersPayload>;
  partition(threshold?: number): Promise<PartitionPayload>;
  diff(a: number, b: number): Promise<DiffPayload>;
  families(): Promise<FamiliesPayload>;
  init(revision: number, threshold?: number): Promise<FamiliesPayload>;
  merge(revision: number, a: string, b: string): Promise<FamiliesPayload>;
  split(revision: number, a: string): Promise<FamiliesPayload>;
  rename(revision: number, id: string, name: string): Promise<FamiliesPayload>;
  keep(revision: number, id: string, note: string): Promise<FamiliesPayload>;
  addEdge(
    revision: number,
    src: string,
    dst: string,
    changes: [string, string][],
  ): Promise<FamiliesPayload>;
  criteria(): Promise<string[]>;
  exportLineage(format: ExportFormat): Promise<string>;
}

async function asError(resp: Response): Promise<ApiError> {
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    if (typeof body?.detail === "string") detail = body.detail;
  } catch {
    /* non-JSON error body; keep the status text */
  }
  return new ApiError(resp.status, detail);
}

export class HttpApi implements LoaderApi {
  constructor(private readonly base: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await fetch(this.base + path);
    if (!resp.ok) throw await asError(resp);
    return (await resp.json()) as T;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const resp = await fetch(this.base + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) throw await asError(resp);
    return (await resp.json()) as T;
  }

  corpus() {
    return this.getJson<CorpusPayload>("/api/corpus");
  }

  log(id: string) {
    return this.getJson<LogDetail>(`/api/corpus/${encodeURIComponent(id)}`);
  }

  dendrogram() {
    return this.getJson<DendrogramPayload>("/api/dendrogram");
  }

  template(node: number) {
    return this.getJson<TemplatePayload>(`/api/cluster/${node}/template`);
  }

  members(node: number) {
    return this.getJson<MembersPayload>(`/api/cluster/${node}/members`);
  }

  partition(threshold?: number) {
    const query = threshold === undefined ? "" : `?threshold=${threshold}`;
    return this.getJson<PartitionPayload>(`/api/partition${query}`);
  }

  diff(a: number, b: number) {
    return this.getJson<DiffPayload>(`/api/diff?a=${a}&b=${b}`);
  }

  families() {
    return this.getJson<FamiliesPayload>("/api/families");
  }

  init(revision: number, threshold?: number) {
    const body: Record<string, unknown> = { revision };
    if (threshold !== undefined) body.threshold = threshold;
    return this.postJson<FamiliesPayload>("/api/families/init", body);
  }

  merge(revision: number, a: string, b: string) {
    return this.postJson<FamiliesPayload>("/api/families/merge", { revision, a, b });
  }

  split(revision: number, a: string) {
    return this.postJson<FamiliesPayload>("/api/families/split", { revision, a });
  }

  rename(revision: number, id: string, name: string) {
    return this.postJson<FamiliesPayload>(
      `/api/families/${encodeURIComponent(id)}/rename`,
      { revision, name },
    );
  }

  keep(revision: number, id: string, note: string) {
    return this.postJson<FamiliesPayload>(
      `/api/families/${encodeURIComponent(id)}/keep`,
      { revision, note },
    );
  }

  addEdge(revision: number, src: string, dst: string, changes: [string, string][]) {
    return this.postJson<FamiliesPayload>("/api/lineage/edge", {
      revision,
      src,
      dst,
      changes,
    });
  }

  async criteria() {
    const body = await this.getJson<{ criteria: string[] }>("/api/criteria");
    return body.criteria;
  }

  async exportLineage(format: ExportFormat) {
    const resp = await fetch(`${this.base}/api/export?format=${format}`);
    if (!resp.ok) throw await asError(resp);
    return await resp.text();
  }
}
