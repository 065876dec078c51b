/** Scripted end-to-end session against a live demo service.
 *
 * Spawns the service, drives 12 actions (including 2 likes) through the
 * real client, and checks the interaction contract: one feedback message
 * per action, a queue re-render for every rerank_result, page fetches at
 * the 6th and 12th consumption, and a recorded log that the session
 * validator accepts.
 */

import { ChildProcess, spawn, spawnSync } from "node:child_process";
import { mkdtempSync, existsSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { SessionClient } from "../src/client.js";
import { DemoMessage } from "../src/messages.js";

const PORT = 18321;
const workDir = mkdtempSync(join(tmpdir(), "edgerank-e2e-"));
const modelPath = join(workDir, "model.bin");
const recordPath = join(workDir, "session.ndjson");
let server: ChildProcess;

function sleep(ms: number): Promise<void> {
  return new Promise((r) => setTimeout(r, ms));
}

async function waitFor(cond: () => boolean, what: string, timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!cond()) {
    if (Date.now() > deadline) {
      throw new Error(`timed out waiting for ${what}`);
    }
    await sleep(25);
  }
}

beforeAll(async () => {
  const save = spawnSync("python3", [
    "-c",
    [
      "from edgerank.features import FeatureConfig",
      "from edgerank.model import ModelConfig, RankingModel",
      "from edgerank.serialize import save_model",
      `save_model(RankingModel(ModelConfig(), FeatureConfig(), seed=0), ${JSON.stringify(modelPath)})`,
    ].join("\n"),
  ]);
  expect(save.status, String(save.stderr)).toBe(0);

  server = spawn("python3", [
    "-m", "edgerank.cli", "serve-demo",
    "--model", modelPath,
    "--port", String(PORT),
    "--seed", "7",
    "--record", recordPath,
  ], { stdio: ["ignore", "pipe", "pipe"] });

  const deadline = Date.now() + 30_000;
  for (;;) {
    try {
      const r = await fetch(`http://127.0.0.1:${PORT}/healthz`);
      if (r.ok) {
        break;
      }
    } catch {
      /* not up yet */
    }
    if (Date.now() > deadline) {
      throw new Error("demo service did not come up");
    }
    await sleep(100);
  }
}, 60_000);

afterAll(() => {
  server?.kill();
});

describe("scripted live session", () => {
  it("12 actions obey the interaction contract and the log validates", async () => {
    const received: DemoMessage[] = [];
    let renders = 0;
    let queueRenders = 0;
    const client = new SessionClient(
      `ws://127.0.0.1:${PORT}/ws`,
      (url) => new WebSocket(url) as never,
      {
        onView: (view, msg) => {
          renders += 1;
          if (msg !== null) {
            received.push(msg);
          }
          if (msg?.kind === "rerank_result") {
            queueRenders = view.queueVersion;
          }
        },
      },
    );
    client.connect();
    await waitFor(() => client.view.current !== null, "first video");

    // Action script: swipes with two likes at actions 3 and 9.
    const fetchesAfterAction: number[] = [];
    for (let action = 1; action <= 12; action += 1) {
      const metricsBefore = received.filter((m) => m.kind === "metrics").length;
      const fetchesBefore = received.filter((m) => m.kind === "page_fetch").length;
      const sent = client.sendAction(
        action === 3 || action === 9
          ? { kind: "like" }
          : { kind: "watch_dwell", dwellS: 6.0 },
      );
      expect(sent).not.toBeNull();
      await waitFor(
        () => received.filter((m) => m.kind === "metrics").length > metricsBefore,
        `metrics after action ${action}`,
      );
      if (received.filter((m) => m.kind === "page_fetch").length > fetchesBefore) {
        fetchesAfterAction.push(action);
      }
    }

    // one feedback message per action
    expect(client.sentFeedback).toHaveLength(12);
    expect(client.sentFeedback.filter((f) => f.like)).toHaveLength(2);

    // queue re-render after every rerank_result (initial burst + one per action)
    const rerankCount = received.filter((m) => m.kind === "rerank_result").length;
    expect(rerankCount).toBe(13);
    expect(queueRenders).toBe(rerankCount);
    expect(renders).toBeGreaterThanOrEqual(received.length);

    // page fetch at the 6th and 12th consumption
    expect(fetchesAfterAction).toEqual([6, 12]);

    // seq strictly increasing across the whole session
    const seqs = received.map((m) => m.seq);
    expect(seqs).toEqual([...seqs].sort((a, b) => a - b));
    expect(new Set(seqs).size).toBe(seqs.length);

    // the view's queue is exactly the last rerank_result payload
    const lastRerank = [...received].reverse().find((m) => m.kind === "rerank_result");
    expect(client.view.queue).toEqual(lastRerank?.payload);

    client.close();
    await waitFor(() => existsSync(recordPath), "recorded session log");
    await waitFor(
      () => readFileSync(recordPath, "utf8").includes("session_end"),
      "complete session log",
    );

    // replay the recorded log through the session validator
    const check = spawnSync("python3", [
      "-m", "edgerank.cli", "validate-log", "--logs", recordPath,
    ]);
    expect(check.status, String(check.stdout) + String(check.stderr)).toBe(0);

    // the recorded log contains one impression per action, two with likes
    const impressions = readFileSync(recordPath, "utf8")
      .trim()
      .split("\n")
      .map((l) => JSON.parse(l))
      .filter((e) => e.kind === "impression");
    expect(impressions).toHaveLength(12);
    expect(impressions.filter((e) => e.labels.like === 1)).toHaveLength(2);
  }, 120_000);
});
