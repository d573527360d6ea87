/** DOM/SVG rendering for the workbench panels. */
import type { Layout, NodeCard, HeatCell } from "./viewmodel.js";
import type { ActionSpec } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export function renderGraph(container: HTMLElement, layout: Layout,
                            onNodeClick: (name: string) => void): void {
  container.innerHTML = "";
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("width", String(Math.max(layout.width, 320)));
  svg.setAttribute("height", String(Math.max(layout.height, 200)));
  const byName = new Map(layout.nodes.map((n) => [n.name, n]));
  for (const e of layout.edges) {
    const a = byName.get(e.src);
    const b = byName.get(e.dst);
    if (!a || !b) continue;
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("x1", String(a.x));
    line.setAttribute("y1", String(a.y + 22));
    line.setAttribute("x2", String(b.x));
    line.setAttribute("y2", String(b.y - 22));
    line.setAttribute("class", "edge");
    line.setAttribute("marker-end", "url(#arrow)");
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = `${e.src} → ${e.dst} (${e.weight.toFixed(4)})`;
    line.appendChild(title);
    svg.appendChild(line);
  }
  const defs = document.createElementNS(SVG_NS, "defs");
  defs.innerHTML =
    '<marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="7" ' +
    'markerHeight="7" orient="auto-start-reverse"><path d="M 0 0 L 10 5 L 0 10 z" ' +
    'fill="#8a8aa8"/></marker>';
  svg.prepend(defs);
  for (const n of layout.nodes) {
    const g = document.createElementNS(SVG_NS, "g");
    g.setAttribute("transform", `translate(${n.x}, ${n.y})`);
    g.setAttribute("class", "node");
    const circle = document.createElementNS(SVG_NS, "circle");
    circle.setAttribute("r", "22");
    const shade = n.pns === null ? "#3a3a52" : pnsNodeShade(n.pns);
    circle.setAttribute("fill", shade);
    g.appendChild(circle);
    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("text-anchor", "middle");
    label.setAttribute("dy", "5");
    label.textContent = n.name;
    g.appendChild(label);
    g.addEventListener("click", () => onNodeClick(n.name));
    svg.appendChild(g);
  }
  container.appendChild(svg);
}

function pnsNodeShade(v: number): string {
  const level = Math.round(250 - Math.min(1, Math.max(0, v)) * 170);
  return `rgb(255, ${level}, 60)`;
}

export function renderCards(container: HTMLElement, cards: NodeCard[]): void {
  container.innerHTML = "";
  for (const card of cards) {
    const div = document.createElement("div");
    div.className = "card" + (card.changed ? " changed" : "");
    div.dataset.node = card.name;
    div.innerHTML =
      `<span class="name">${card.name}</span>` +
      `<span class="badge ${card.hard ? "on" : "off"}">${card.hard ? "1" : "0"}</span>` +
      `<span class="prob">${card.prob}</span>` +
      `<span class="prov ${card.provenance}">${card.provenance}</span>`;
    container.appendChild(div);
  }
}

export function renderSpec(container: HTMLElement, spec: ActionSpec[],
                           handlers: {
                             onRemove: (node: string) => void;
                             onMove: (node: string, offset: number) => void;
                             onClear: () => void;
                           }): void {
  container.innerHTML = "";
  spec.forEach((action) => {
    const row = document.createElement("div");
    row.className = "spec-row";
    const text = action.kind === "block" ? `block(${action.node})`
      : action.kind === "do" ? `do(${action.node}=${action.value})`
      : `truth(${action.node}=${action.value})`;
    row.innerHTML = `<span>${text}</span>`;
    for (const [label, offset] of [["↑", -1], ["↓", 1]] as const) {
      const btn = document.createElement("button");
      btn.textContent = label;
      btn.addEventListener("click", () => handlers.onMove(action.node, offset));
      row.appendChild(btn);
    }
    const rm = document.createElement("button");
    rm.textContent = "×";
    rm.addEventListener("click", () => handlers.onRemove(action.node));
    row.appendChild(rm);
    container.appendChild(row);
  });
  if (spec.length) {
    const clear = document.createElement("button");
    clear.textContent = "clear all";
    clear.className = "clear";
    clear.addEventListener("click", handlers.onClear);
    container.appendChild(clear);
  }
}

export function renderHeatmap(container: HTMLElement, nodes: string[],
                              cells: HeatCell[], notice?: string): void {
  container.innerHTML = "";
  if (notice) {
    const p = document.createElement("p");
    p.className = "notice";
    p.textContent = notice;
    container.appendChild(p);
  }
  const table = document.createElement("table");
  table.className = "heatmap";
  const head = document.createElement("tr");
  head.innerHTML = "<th></th>" + nodes.map((n) => `<th>${n}</th>`).join("");
  table.appendChild(head);
  for (const cause of nodes) {
    const tr = document.createElement("tr");
    tr.innerHTML = `<th>${cause}</th>`;
    for (const effect of nodes) {
      const cell = cells.find((c) => c.cause === cause && c.effect === effect);
      const td = document.createElement("td");
      if (cell) {
        td.style.background = cell.shade;
        td.title = cell.value === null ? "not connected" : cell.value.toFixed(3);
        td.textContent = cell.value === null ? "·" : cell.value.toFixed(2);
      }
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
  container.appendChild(table);
}

export function renderBanner(container: HTMLElement, message: string | null): void {
  container.textContent = message ?? "";
  container.style.display = message ? "block" : "none";
}

export function renderHealth(el: HTMLElement, ok: boolean): void {
  el.className = ok ? "health ok" : "health bad";
  el.textContent = ok ? "service up" : "service down";
}
