import type { TripleView } from "./types.js";

export interface GraphNode {
  id: string;
  type: string | null;
  degree: number;
}

export interface GraphEdge {
  id: string;
  source: string;
  target: string;
  predicate: string;
  /** Attribute value when the object is not an entity (self-edge). */
  value: string | null;
  t: number;
  confidence: number;
}

export interface GraphView {
  nodes: GraphNode[];
  edges: GraphEdge[];
}

/**
 * Build the node-edge view of a knowledge-graph slice: one node per
 * distinct entity, one edge per triple. Objects without a type are
 * attribute values, not entities — they stay on the subject as a
 * self-edge, mirroring the endpoint's `entities` rule. Node count
 * therefore equals the endpoint's `entities` length and edge count
 * its `count`.
 */
export function buildGraph(triples: TripleView[]): GraphView {
  const nodes = new Map<string, GraphNode>();

  const touch = (id: string, type: string | null): GraphNode => {
    let node = nodes.get(id);
    if (!node) {
      node = { id, type, degree: 0 };
      nodes.set(id, node);
    } else if (node.type === null && type !== null) {
      node.type = type;
    }
    return node;
  };

  const edges: GraphEdge[] = [];
  for (const triple of triples) {
    const source = touch(triple.subject, triple.subject_type);
    const objectIsEntity = triple.object_type != null;
    const target = objectIsEntity ? touch(triple.object, triple.object_type) : source;
    source.degree += 1;
    if (objectIsEntity) target.degree += 1;
    edges.push({
      id: triple.uid,
      source: source.id,
      target: target.id,
      predicate: triple.predicate,
      value: objectIsEntity ? null : triple.object,
      t: triple.t,
      confidence: triple.confidence,
    });
  }
  return { nodes: [...nodes.values()], edges };
}
