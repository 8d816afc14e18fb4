/**
 * In-process bindings for the avcount reward engine.
 *
 * A RewardEngine owns one long-lived `avcount api` subprocess and talks to
 * it over line-buffered pipes, so reward computation never round-trips
 * through files and every result comes from the exact code the batch CLI
 * runs. Calls are pipelined and matched by request id; the instance is
 * safe to share across concurrent async callers.
 */

import { spawn, type ChildProcessByStdio } from "node:child_process";
import { createInterface, type Interface } from "node:readline";
import type { Readable, Writable } from "node:stream";

import {
  EngineError,
  type IouKind,
  type JsonRecovery,
  type KeyCompleteness,
  type ParsedAnswer,
  type RewardBreakdown,
  type RewardRequest,
} from "./types.js";

export * from "./types.js";

export interface EngineOptions {
  /** Python interpreter with the engine installed (default: $AVCOUNT_PYTHON or python3). */
  pythonBin?: string;
  /** Extra arguments placed before `-m avcount.cli api`. */
  pythonArgs?: string[];
}

interface Pending {
  resolve: (value: unknown) => void;
  reject: (err: Error) => void;
}

export class RewardEngine {
  private child: ChildProcessByStdio<Writable, Readable, null>;
  private reader: Interface;
  private pending = new Map<number, Pending>();
  private nextId = 1;
  private closed = false;

  constructor(options: EngineOptions = {}) {
    const python = options.pythonBin ?? process.env.AVCOUNT_PYTHON ?? "python3";
    const args = [...(options.pythonArgs ?? []), "-m", "avcount.cli", "api"];
    this.child = spawn(python, args, { stdio: ["pipe", "pipe", "inherit"] });
    this.reader = createInterface({ input: this.child.stdout });
    this.reader.on("line", (line) => this.onLine(line));
    this.child.on("exit", (code) => this.onExit(code));
    this.child.on("error", (err) => this.failAll(err));
  }

  private onLine(line: string): void {
    if (!line.trim()) return;
    let doc: { id?: number; result?: unknown; error?: string };
    try {
      doc = JSON.parse(line);
    } catch {
      return; // not ours; ignore stray output
    }
    if (typeof doc.id !== "number") return;
    const pending = this.pending.get(doc.id);
    if (!pending) return;
    this.pending.delete(doc.id);
    if (doc.error !== undefined) {
      pending.reject(new EngineError(doc.error));
    } else {
      pending.resolve(doc.result);
    }
  }

  private onExit(code: number | null): void {
    if (!this.closed || this.pending.size > 0) {
      this.failAll(new Error(`avcount engine exited with code ${code}`));
    }
  }

  private failAll(err: Error): void {
    for (const pending of this.pending.values()) pending.reject(err);
    this.pending.clear();
  }

  private call(op: string, args: Record<string, unknown>): Promise<unknown> {
    if (this.closed) {
      return Promise.reject(new Error("engine is closed"));
    }
    const id = this.nextId++;
    const line = JSON.stringify({ id, op, args }) + "\n";
    return new Promise((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
      this.child.stdin.write(line, (err) => {
        if (err) {
          this.pending.delete(id);
          reject(err);
        }
      });
    });
  }

  /** Score one rollout; identical numbers to the CLI batch path. */
  async computeReward(request: RewardRequest): Promise<RewardBreakdown> {
    const args: Record<string, unknown> = {
      task: request.task,
      raw_text: request.rawText,
      gt: request.gt,
    };
    if (request.id !== undefined) args.id = request.id;
    if (request.weights !== undefined) args.weights = request.weights;
    return (await this.call("compute_reward", args)) as RewardBreakdown;
  }

  /** Pipelined batch scoring; results come back in request order. */
  computeRewardBatch(requests: RewardRequest[]): Promise<RewardBreakdown[]> {
    return Promise.all(requests.map((r) => this.computeReward(r)));
  }

  async rewardGFormat(text: string): Promise<number> {
    return (await this.call("reward_gformat", { text })) as number;
  }

  async rewardJFormat(text: string, requiredKeys: string[]): Promise<number> {
    return (await this.call("reward_jformat", { text, required_keys: requiredKeys })) as number;
  }

  async rewardAcc(pred: string | null, gt: string): Promise<number> {
    return (await this.call("reward_acc", { pred, gt })) as number;
  }

  async rewardIou(preds: number[][], gts: number[][], kind: IouKind): Promise<number> {
    return (await this.call("reward_iou", { preds, gts, kind })) as number;
  }

  async rewardRmae(predCount: number | null, gtCount: number): Promise<number> {
    return (await this.call("reward_rmae", {
      pred_count: predCount,
      gt_count: gtCount,
    })) as number;
  }

  async parseCountAnswer(text: string): Promise<ParsedAnswer> {
    return (await this.call("parse_count_answer", { text })) as ParsedAnswer;
  }

  async parseEventAnswer(text: string): Promise<ParsedAnswer> {
    return (await this.call("parse_event_answer", { text })) as ParsedAnswer;
  }

  async parseObjectAnswer(text: string): Promise<ParsedAnswer> {
    return (await this.call("parse_object_answer", { text })) as ParsedAnswer;
  }

  async parseAttributeAnswer(text: string): Promise<ParsedAnswer> {
    return (await this.call("parse_attribute_answer", { text })) as ParsedAnswer;
  }

  async recoverJson(text: string): Promise<JsonRecovery> {
    return (await this.call("recover_json", { text })) as JsonRecovery;
  }

  async keyCompleteness(value: unknown, requiredKeys: string[]): Promise<KeyCompleteness> {
    return (await this.call("key_completeness", {
      value,
      required_keys: requiredKeys,
    })) as KeyCompleteness;
  }

  async extractTagged(text: string, tag: string): Promise<string | null> {
    return (await this.call("extract_tagged", { text, tag })) as string | null;
  }

  /** Flush, stop the subprocess, and reject anything still in flight. */
  async close(): Promise<void> {
    if (this.closed) return;
    this.closed = true;
    this.child.stdin.end();
    await new Promise<void>((resolve) => {
      if (this.child.exitCode !== null) return resolve();
      this.child.once("exit", () => resolve());
      setTimeout(() => {
        this.child.kill();
        resolve();
      }, 5000).unref();
    });
  }
}

/** Convenience: run one batch against a fresh engine and tear it down. */
export async function computeRewards(
  requests: RewardRequest[],
  options: EngineOptions = {},
): Promise<RewardBreakdown[]> {
  const engine = new RewardEngine(options);
  try {
    return await engine.computeRewardBatch(requests);
  } finally {
    await engine.close();
  }
}
