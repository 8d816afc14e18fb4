/** Wire types shared with the engine's op-call protocol. */

export type TaskKind = "QA" | "TemporalGrounding" | "SpatialGrounding" | "Counting";

export interface RewardWeights {
  format?: number;
  task?: number;
}

export interface RewardRequest {
  /** Optional caller id, echoed back on the breakdown. */
  id?: string | number;
  task: TaskKind;
  rawText: string;
  /**
   * Ground truth payload. QA: string; Counting: non-negative integer;
   * TemporalGrounding: [start, end][] ; SpatialGrounding: [x0, y0, x1, y1][].
   */
  gt: unknown;
  weights?: RewardWeights;
}

export interface RewardBreakdown {
  id?: string | number;
  task: TaskKind;
  r_gformat: number;
  r_jformat: number | null;
  r_task: number;
  total: number;
  w_format: number;
  w_task: number;
}

export type IouKind = "temporal" | "spatial";

export type ParsedAnswer =
  | { kind: "count"; value: number }
  | { kind: "events"; segments: [number, number][] }
  | {
      kind: "object_boxes";
      by_frame: Record<string, [number, number, number, number][]>;
      n_dropped: number;
    }
  | {
      kind: "attribute_boxes";
      by_frame: Record<string, { bbox: [number, number, number, number]; label: string }[]>;
      n_dropped: number;
    }
  | { kind: "failure"; reason: string };

export interface JsonRecovery {
  /** 1.0 strict parse, 0.5 bracket-matched extraction, 0.0 unrecoverable. */
  m: number;
  value: unknown;
}

export interface KeyCompleteness {
  s: number;
  n_complete: number;
  n_total: number;
}

/** A request the engine refused (bad payload, unknown op, ...). */
export class EngineError extends Error {
  constructor(public readonly reason: string) {
    super(reason);
    this.name = "EngineError";
  }
}
