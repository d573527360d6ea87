/** Workbench wiring: load the session, drive interventions, explore
 * counterfactuals and the PNS heatmap. One in-flight request per action. */
import { ApiClient, ServiceError } from "./api.js";
import {
  buildCards, layoutGraph, pnsGrid, SpecBuilder,
} from "./viewmodel.js";
import {
  renderBanner, renderCards, renderGraph, renderHealth, renderHeatmap, renderSpec,
} from "./render.js";
import type { GraphPayload, StatesPayload } from "./types.js";

const $ = (id: string) => document.getElementById(id) as HTMLElement;

interface Session {
  client: ApiClient;
  graph: GraphPayload;
  spec: SpecBuilder;
  factual: StatesPayload | null;
  busy: boolean;
}

let session: Session | null = null;

async function connect(): Promise<void> {
  const address = ($("address") as HTMLInputElement).value.replace(/\/$/, "");
  const client = new ApiClient(address);
  try {
    const health = await client.health();
    renderHealth($("health"), health.status === "ok");
    const graph = await client.graph();
    session = { client, graph, spec: new SpecBuilder(graph.topo_order), factual: null, busy: false };
    renderBanner($("banner"), null);
    renderGraph($("graph"), layoutGraph(graph), onNodeClick);
    await loadSample();
    await loadPns();
  } catch (err) {
    session = null;
    renderHealth($("health"), false);
    renderBanner($("banner"), err instanceof ServiceError
      ? `service error: ${err.message}` : `service unreachable: ${err}`);
  }
}

async function loadSample(): Promise<void> {
  if (!session) return;
  const raw = ($("features") as HTMLInputElement).value.trim();
  if (!raw) return;
  const features = raw.split(",").map((t) => Number(t.trim()));
  try {
    await session.client.setSample(features);
    session.spec.clear();
    const factual = await session.client.predict();
    session.factual = factual;
    renderCards($("cards"), buildCards(factual, []));
    renderSpec($("spec"), session.spec.list(), specHandlers);
    renderBanner($("banner"), null);
  } catch (err) {
    renderBanner($("banner"), `${err instanceof ServiceError ? err.message : err}`);
  }
}

function onNodeClick(name: string): void {
  if (!session) return;
  const kind = ($("action-kind") as HTMLSelectElement).value;
  const value = Number(($("action-value") as HTMLSelectElement).value);
  if (kind === "do") session.spec.set(name, "do", value);
  else if (kind === "ground_truth") session.spec.set(name, "ground_truth", value);
  else session.spec.set(name, "block");
  void applySpec();
}

const specHandlers = {
  onRemove: (node: string) => {
    session?.spec.remove(node);
    void applySpec();
  },
  onMove: (node: string, offset: number) => {
    session?.spec.move(node, offset);
    void applySpec();
  },
  onClear: () => {
    session?.spec.clear();
    void applySpec();
  },
};

async function applySpec(): Promise<void> {
  if (!session || session.busy) return;
  session.busy = true;
  try {
    const result = await session.client.intervene(session.spec.list());
    renderCards($("cards"), buildCards(result.after, result.changed));
    renderSpec($("spec"), session.spec.list(), specHandlers);
    renderDiff(result.before, result.after, result.changed);
    renderBanner($("banner"), null);
  } catch (err) {
    renderBanner($("banner"), `intervention rejected: ${
      err instanceof ServiceError ? err.message : err}`);
  } finally {
    session.busy = false;
  }
}

function renderDiff(before: StatesPayload, after: StatesPayload, changed: string[]): void {
  const target = $("diff");
  const pinned = new Set(after.provenance
    .map((p, i) => (p === "predicted" ? null : after.nodes[i]))
    .filter((n): n is string => n !== null));
  target.innerHTML = before.nodes.map((name, i) => {
    const cls = pinned.has(name) ? "intervened" : changed.includes(name) ? "changed" : "";
    return `<tr class="${cls}"><td>${name}</td><td>${before.probs[i].toFixed(3)}</td>` +
      `<td>${after.probs[i].toFixed(3)}</td></tr>`;
  }).join("");
}

async function loadPns(): Promise<void> {
  if (!session) return;
  const nodes = session.graph.topo_order;
  try {
    const { rows } = await session.client.pns();
    renderHeatmap($("heatmap"), nodes, pnsGrid(nodes, rows));
  } catch (err) {
    renderHeatmap($("heatmap"), nodes, pnsGrid(nodes, []),
                  `no PNS data: ${err instanceof ServiceError ? err.message : err}`);
  }
}

$("connect").addEventListener("click", () => void connect());
$("load-sample").addEventListener("click", () => void loadSample());
