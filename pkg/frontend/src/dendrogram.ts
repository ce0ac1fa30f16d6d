/** SVG dendrogram: height axis, draggable cut line, family color bars.
 *
 * Only the top `expandDepth` layers are rendered node-by-node; deeper
 * subtrees collapse into one triangle marker each (click to expand), so a
 * 10,000-leaf tree stays light.
 */

import type { DendrogramPayload, PartitionPayload } from "./api.js";

export interface TreeNode {
  id: number;
  height: number;
  size: number;
  depth: number;
  children: [TreeNode, TreeNode] | null;
  /** leaf ids under this node, in display order */
  leaves: number[];
}

export function buildTree(payload: DendrogramPayload): TreeNode {
  const n = payload.n_leaves;
  const nodes: TreeNode[] = [];
  for (let i = 0; i < n; i++) {
    nodes.push({ id: i, height: 0, size: 1, depth: 0, children: null, leaves: [i] });
  }
  payload.merges.forEach((merge, step) => {
    const left = nodes[merge.left];
    const right = nodes[merge.right];
    nodes.push({
      id: n + step,
      height: merge.height,
      size: merge.size,
      depth: 0,
      children: [left, right],
      leaves: [...left.leaves, ...right.leaves],
    });
  });
  const root = nodes[nodes.length - 1];
  const stack: TreeNode[] = [root];
  while (stack.length > 0) {
    const node = stack.pop()!;
    if (node.children) {
      for (const child of node.children) {
        child.depth = node.depth + 1;
        stack.push(child);
      }
    }
  }
  return root;
}

export const DEFAULT_EXPAND_DEPTH = 5;

export interface Geometry {
  width: number;
  height: number;
  top: number;
  bottom: number;
  left: number;
  right: number;
  maxHeight: number;
}

export function makeGeometry(root: TreeNode, width = 800, height = 420): Geometry {
  return {
    width,
    height,
    top: 12,
    bottom: 34,
    left: 14,
    right: 14,
    maxHeight: Math.max(root.height, 1e-9),
  };
}

export function heightToY(h: number, geom: Geometry): number {
  const plot = geom.height - geom.top - geom.bottom;
  return geom.top + (1 - h / geom.maxHeight) * plot;
}

export function yToHeight(y: number, geom: Geometry): number {
  const plot = geom.height - geom.top - geom.bottom;
  const h = (1 - (y - geom.top) / plot) * geom.maxHeight;
  return Math.min(Math.max(h, 0), geom.maxHeight);
}

const PALETTE = [
  "#4c78a8",
  "#f58518",
  "#54a24b",
  "#e45756",
  "#72b7b2",
  "#eeca3b",
  "#b279a2",
  "#ff9da6",
  "#9d755d",
  "#bab0ac",
];

export interface DendrogramOptions {
  threshold: number;
  expandDepth?: number;
  expanded?: Set<number>;
  width?: number;
  height?: number;
  onCutDrag?: (threshold: number) => void;
  onSelectNode?: (node: number) => void;
  onExpand?: (node: number) => void;
}

const SVG_NS = "http://www.w3.org/2000/svg";

function svgEl<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string>,
): SVGElementTagNameMap[K] {
  const el = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) el.setAttribute(key, value);
  return el;
}

export function renderDendrogram(
  container: HTMLElement,
  payload: DendrogramPayload,
  partition: PartitionPayload | null,
  opts: DendrogramOptions,
): SVGSVGElement {
  const root = buildTree(payload);
  const geom = makeGeometry(root, opts.width, opts.height);
  const expandDepth = opts.expandDepth ?? DEFAULT_EXPAND_DEPTH;
  const expanded = opts.expanded ?? new Set<number>();

  const svg = svgEl("svg", {
    class: "dendrogram",
    width: String(geom.width),
    height: String(geom.height),
    viewBox: `0 0 ${geom.width} ${geom.height}`,
  });

  const plotWidth = geom.width - geom.left - geom.right;
  const slot = plotWidth / Math.max(payload.n_leaves, 1);
  const order = new Map<number, number>();
  root.leaves.forEach((leaf, position) => order.set(leaf, position));
  const leafX = (leaf: number) => geom.left + (order.get(leaf)! + 0.5) * slot;

  const nodeX = (node: TreeNode): number => {
    const xs = node.leaves.map(leafX);
    return (Math.min(...xs) + Math.max(...xs)) / 2;
  };

  const body = svgEl("g", { class: "tree" });
  svg.appendChild(body);

  const drawNode = (node: TreeNode): void => {
    const x = nodeX(node);
    const y = heightToY(node.height, geom);
    if (!node.children) {
      body.appendChild(
        svgEl("line", {
          class: "leaf-tick",
          "data-node": String(node.id),
          x1: String(x),
          x2: String(x),
          y1: String(y),
          y2: String(y - 5),
        }),
      );
      return;
    }
    if (node.depth >= expandDepth && !expanded.has(node.id)) {
      // virtualized subtree: a single marker standing in for node.size leaves
      const marker = svgEl("g", {
        class: "collapsed",
        "data-node": String(node.id),
        "data-leaf-count": String(node.size),
      });
      const baseY = heightToY(0, geom);
      const spread = Math.max(slot * node.size * 0.5, 4);
      marker.appendChild(
        svgEl("polygon", {
          points: `${x},${y} ${x - spread},${baseY} ${x + spread},${baseY}`,
        }),
      );
      marker.addEventListener("click", () => opts.onExpand?.(node.id));
      body.appendChild(marker);
      return;
    }
    const [left, right] = node.children;
    const xl = nodeX(left);
    const xr = nodeX(right);
    const yl = heightToY(left.height, geom);
    const yr = heightToY(right.height, geom);
    body.appendChild(
      svgEl("path", {
        class: "edge",
        d: `M ${xl} ${yl} V ${y} H ${xr} V ${yr}`,
        fill: "none",
      }),
    );
    const dot = svgEl("circle", {
      class: "node",
      "data-node": String(node.id),
      cx: String(x),
      cy: String(y),
      r: "4",
    });
    dot.addEventListener("click", () => opts.onSelectNode?.(node.id));
    body.appendChild(dot);
    drawNode(left);
    drawNode(right);
  };
  drawNode(root);

  if (partition) {
    const bars = svgEl("g", { class: "family-bars" });
    partition.groups.forEach((group, index) => {
      const xs = group.map(leafX);
      bars.appendChild(
        svgEl("rect", {
          class: "family-bar",
          "data-group": String(index),
          "data-anchor": String(partition.anchors[index]),
          x: String(Math.min(...xs) - slot * 0.4),
          width: String(Math.max(...xs) - Math.min(...xs) + slot * 0.8),
          y: String(geom.height - geom.bottom + 6),
          height: "10",
          fill: PALETTE[index % PALETTE.length],
        }),
      );
    });
    svg.appendChild(bars);
  }

  const cutY = heightToY(Math.min(opts.threshold, geom.maxHeight), geom);
  const cut = svgEl("line", {
    class: "cut-line",
    x1: String(geom.left),
    x2: String(geom.width - geom.right),
    y1: String(cutY),
    y2: String(cutY),
    stroke: "#d62728",
    "stroke-dasharray": "6 4",
  });
  svg.appendChild(cut);

  let dragging = false;
  const dragTo = (event: MouseEvent): void => {
    const top = svg.getBoundingClientRect().top;
    opts.onCutDrag?.(yToHeight(event.clientY - top, geom));
  };
  cut.addEventListener("mousedown", () => {
    dragging = true;
  });
  svg.addEventListener("mousemove", (event) => {
    if (dragging) dragTo(event as MouseEvent);
  });
  svg.addEventListener("mouseup", (event) => {
    if (dragging) {
      dragging = false;
      dragTo(event as MouseEvent);
    }
  });

  container.replaceChildren(svg);
  return svg;
}
