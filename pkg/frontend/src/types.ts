/** Payload types mirroring the service wire format. */

export interface GraphNode {
  name: string;
  pns_upper: number | null;
}

export interface GraphEdge {
  src: string;
  dst: string;
  weight: number;
  pns_upper: number | null;
}

export interface GraphPayload {
  nodes: GraphNode[];
  edges: GraphEdge[];
  topo_order: string[];
}

export interface StatesPayload {
  nodes: string[];
  probs: number[];
  hard: number[];
  provenance: string[];
  embedding: number[][];
}

export interface IntervenePayload {
  before: StatesPayload;
  after: StatesPayload;
  changed: string[];
  spec: ActionSpec[];
}

export type ActionKind = "do" | "ground_truth" | "block";

export interface ActionSpec {
  node: string;
  kind: ActionKind;
  value: number | null;
}

export interface PnsRow {
  cause: string;
  effect: string;
  value: number;
  lower: number;
  upper: number;
  connected: boolean;
}

export interface HealthPayload {
  status: string;
  nodes: number;
}
