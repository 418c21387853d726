import { describe, expect, it } from "vitest";
import { buildGraph } from "../src/graph.js";
import type { TripleView } from "../src/types.js";

function triple(
  uid: string,
  subject: string,
  predicate: string,
  object: string,
  types: [string | null, string | null] = ["vehicle", "person"],
): TripleView {
  return {
    uid,
    subject,
    predicate,
    object,
    confidence: 0.9,
    t: 1.0,
    frame_seq: 24,
    model_id: "m",
    epoch: 0,
    subject_type: types[0],
    object_type: types[1],
  };
}

describe("graph builder", () => {
  it("creates one node per distinct entity and one edge per triple", () => {
    const graph = buildGraph([
      triple("t1", "car1", "collided_with", "p1"),
      triple("t2", "p1", "lying_on", "road", ["person", "road_object"]),
      triple("t3", "car1", "fleeing", "road", ["vehicle", "road_object"]),
    ]);
    expect(graph.nodes.map((n) => n.id).sort()).toEqual(["car1", "p1", "road"]);
    expect(graph.edges).toHaveLength(3);
    expect(graph.edges.map((e) => e.id)).toEqual(["t1", "t2", "t3"]);
  });

  it("an untyped object is an attribute value, not a node", () => {
    const graph = buildGraph([
      triple("t1", "car1", "moving", "true", ["vehicle", null]),
      triple("t2", "car1", "collided_with", "p1"),
    ]);
    expect(graph.nodes.map((n) => n.id).sort()).toEqual(["car1", "p1"]);
    expect(graph.edges).toHaveLength(2); // edge count still equals triple count
    const attribute = graph.edges.find((e) => e.id === "t1")!;
    expect(attribute.source).toBe("car1");
    expect(attribute.target).toBe("car1");
    expect(attribute.value).toBe("true");
    expect(graph.edges.find((e) => e.id === "t2")!.value).toBeNull();
  });

  it("counts degree on both endpoints and keeps first known type", () => {
    const graph = buildGraph([
      triple("t1", "car1", "collided_with", "p1"),
      triple("t2", "car1", "damaged", "p1"),
    ]);
    const car = graph.nodes.find((n) => n.id === "car1")!;
    const p = graph.nodes.find((n) => n.id === "p1")!;
    expect(car.degree).toBe(2);
    expect(p.degree).toBe(2);
    expect(car.type).toBe("vehicle");
  });

  it("backfills a node type discovered later", () => {
    const graph = buildGraph([
      triple("t1", "p1", "crossing", "road", [null, "road_object"]),
      triple("t2", "p1", "lying_on", "road", ["person", "road_object"]),
    ]);
    expect(graph.nodes.find((n) => n.id === "p1")!.type).toBe("person");
  });

  it("handles the empty slice", () => {
    const graph = buildGraph([]);
    expect(graph.nodes).toEqual([]);
    expect(graph.edges).toEqual([]);
  });

  it("a self-referencing entity is a single node", () => {
    const graph = buildGraph([triple("t1", "car1", "near", "car1", ["vehicle", "vehicle"])]);
    expect(graph.nodes).toHaveLength(1);
    expect(graph.nodes[0]!.degree).toBe(2);
  });
});
