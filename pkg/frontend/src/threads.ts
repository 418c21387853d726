import { ApiClient, ApiError } from "./api.js";
import type { InteractiveAnswer, TripleView } from "./types.js";

/** One node of the interactive-query thread tree. */
export interface ThreadNode {
  queryId: string | null;
  text: string;
  answer: string | null;
  window: [number, number] | null;
  supporting: TripleView[];
  children: ThreadNode[];
  error: string | null;
  pending: boolean;
}

function nodeFrom(answer: InteractiveAnswer): ThreadNode {
  return {
    queryId: answer.query_id,
    text: answer.text,
    answer: answer.answer,
    window: answer.window,
    supporting: answer.supporting,
    children: [],
    error: null,
    pending: false,
  };
}

/**
 * Client-side model of the query console: submitted questions become
 * root threads; a refine nests its child under the answered parent.
 */
export class ThreadStore {
  readonly roots: ThreadNode[] = [];

  constructor(private readonly client: ApiClient) {}

  /** A node can be refined once it holds a successful answer. */
  canRefine(node: ThreadNode): boolean {
    return node.queryId !== null && node.answer !== null && node.error === null && !node.pending;
  }

  /**
   * Submit a question. Syntax errors from the 400 body stay on the node
   * so they render inline next to the input that caused them.
   */
  async submit(text: string): Promise<ThreadNode> {
    const node: ThreadNode = {
      queryId: null,
      text,
      answer: null,
      window: null,
      supporting: [],
      children: [],
      error: null,
      pending: true,
    };
    this.roots.push(node);
    try {
      const answer = await this.client.submitInteractive(text);
      Object.assign(node, nodeFrom(answer));
    } catch (err) {
      node.pending = false;
      if (err instanceof ApiError && err.status === 400) {
        node.error = err.message;
      } else {
        node.error = err instanceof Error ? err.message : String(err);
      }
    }
    return node;
  }

  /** Refine an answered node; the child nests under its parent. */
  async refine(parent: ThreadNode, refinement: string): Promise<ThreadNode> {
    if (!this.canRefine(parent)) {
      throw new Error("refine requires an answered query");
    }
    const child: ThreadNode = {
      queryId: null,
      text: refinement,
      answer: null,
      window: null,
      supporting: [],
      children: [],
      error: null,
      pending: true,
    };
    parent.children.push(child);
    try {
      const answer = await this.client.refine(parent.queryId!, refinement);
      Object.assign(child, nodeFrom(answer));
    } catch (err) {
      child.pending = false;
      if (err instanceof ApiError && err.status === 400) {
        child.error = err.message;
      } else {
        child.error = err instanceof Error ? err.message : String(err);
      }
    }
    return child;
  }

  /** Uids of a node's supporting triples (subset checks, rendering). */
  supportingUids(node: ThreadNode): Set<string> {
    return new Set(node.supporting.map((t) => t.uid));
  }
}
