// Live-loop acceptance for the browser client, run under node against a real
// service instance:
//   1. a submitted correction must produce a rendered belief update within
//      200 ms (submit -> stream event -> reducer applied),
//   2. the displayed final belief must equal the persisted episode log's
//      final belief exactly.
// The service is spawned as a subprocess unless CORRLEARN_SERVER is set.

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { SessionClient } from "../src/client.js";
import { initialViewState, reduce, type ViewState } from "../src/state.js";
import type { Snapshot } from "../src/types.js";

const PORT = 8931;
const EXTERNAL = process.env.CORRLEARN_SERVER;
const BASE = EXTERNAL ?? `http://127.0.0.1:${PORT}`;

function fail(message: string): never {
  console.error(`FAIL: ${message}`);
  process.exit(1);
}

async function waitForServer(timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const r = await fetch(`${BASE}/scenarios`);
      if (r.ok) return;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) fail("service did not become reachable");
    await new Promise((r) => setTimeout(r, 200));
  }
}

async function main(): Promise<void> {
  let server: ChildProcess | null = null;
  let serviceCwd = ".";
  if (!EXTERNAL) {
    serviceCwd = mkdtempSync(join(tmpdir(), "corrlearn-ui-acceptance-"));
    server = spawn(
      "python3",
      ["-m", "corrlearn.cli", "serve", "--host", "127.0.0.1", "--port", String(PORT)],
      { cwd: serviceCwd, stdio: "ignore" },
    );
  }
  try {
    await waitForServer();

    let state: ViewState = initialViewState();
    const applied: Array<{ snapshot: Snapshot; at: number }> = [];
    const client = new SessionClient(BASE, {
      onSnapshot(snapshot) {
        state = reduce(state, { type: "event", snapshot });
        applied.push({ snapshot, at: performance.now() });
      },
      onCorrectionAck() {},
      onConnection() {},
    });

    const scenarios = await client.listScenarios();
    const scenario = scenarios.find((s) => s.scenario_id === "nav_team");
    if (!scenario) fail("default two-agent scenario not available");
    state = reduce(state, { type: "scenario", scenario });

    const created = await client.createSession("nav_team", "independent", 7, "auto", 5.0);
    state = reduce(state, {
      type: "session",
      sessionId: created.session_id,
      snapshot: created.snapshot,
    });
    client.connectStream();
    await new Promise((r) => setTimeout(r, 500)); // let the stream attach

    // --- latency: correction submit -> belief update applied to the view
    const latencies: number[] = [];
    for (let i = 0; i < 3; i++) {
      const beforeCount = applied.filter((e) => e.snapshot.kind === "belief-update").length;
      const t0 = performance.now();
      await client.submitCorrection(state.clock + 2, i % 2, [0, 1]);
      const deadline = t0 + 2_000;
      let arrived: number | null = null;
      while (performance.now() < deadline) {
        const updates = applied.filter((e) => e.snapshot.kind === "belief-update");
        if (updates.length > beforeCount) {
          arrived = updates[updates.length - 1].at;
          break;
        }
        await new Promise((r) => setTimeout(r, 5));
      }
      if (arrived === null) fail("belief update never arrived on the stream");
      latencies.push(arrived! - t0);
      await new Promise((r) => setTimeout(r, 300));
    }
    const worst = Math.max(...latencies);
    if (worst >= 200) fail(`live-loop latency ${worst.toFixed(1)} ms >= 200 ms`);
    console.log(
      `ACCEPTANCE live-loop-latency: PASS (${latencies.map((l) => l.toFixed(1)).join(", ")} ms)`,
    );

    // --- server truth: displayed final belief == persisted log, exactly
    const summary = await client.end();
    state = reduce(state, { type: "ended", summary });
    const displayed = state.summary!.final_belief;
    const logPath = EXTERNAL ? summary.log_path : join(serviceCwd, summary.log_path);
    const lines = readFileSync(logPath, "utf-8").trim().split("\n");
    const finalRow = JSON.parse(lines[lines.length - 1]) as { final_belief: number[] };
    if (displayed.length !== finalRow.final_belief.length) {
      fail("belief length mismatch between view and log");
    }
    for (let i = 0; i < displayed.length; i++) {
      if (displayed[i] !== finalRow.final_belief[i]) {
        fail(
          `belief[${i}] differs: displayed ${displayed[i]} vs logged ${finalRow.final_belief[i]}`,
        );
      }
    }
    console.log("ACCEPTANCE server-truth: PASS (displayed final belief == persisted log)");

    // --- side-by-side: identical scripted inputs through two sessions under
    // different models; their displayed beliefs must diverge
    let side: ViewState = initialViewState();
    side = reduce(side, { type: "scenario", scenario });
    const mkClient = (tag: "primary" | "compare") =>
      new SessionClient(BASE, {
        onSnapshot(snapshot) {
          side = reduce(
            side,
            tag === "primary"
              ? { type: "event", snapshot }
              : { type: "compare-event", snapshot },
          );
        },
        onCorrectionAck() {},
        onConnection() {},
      });
    const primary = mkClient("primary");
    const compare = mkClient("compare");
    const createdPrimary = await primary.createSession("nav_team", "independent", 3, "stepped");
    side = reduce(side, {
      type: "session",
      sessionId: createdPrimary.session_id,
      snapshot: createdPrimary.snapshot,
    });
    await compare.createSession("nav_team", "final", 3, "stepped");
    side = reduce(side, { type: "compare-model", model: "final" });
    for (const [t, agent] of [
      [10, 1],
      [13, 0],
    ] as Array<[number, number]>) {
      const [ackA, ackB] = await Promise.all([
        primary.submitCorrection(t, agent, [0, 1]),
        compare.submitCorrection(t, agent, [0, 1]),
      ]);
      side = reduce(side, { type: "correction-ack", snapshot: ackA, clamped: ackA.clamped });
      side = reduce(side, { type: "compare-event", snapshot: ackB });
    }
    const primaryBelief = side.belief.map((b) => b.probability);
    const comparedBelief = side.compareBelief!.map((b) => b.probability);
    const diverged = primaryBelief.some((p, i) => Math.abs(p - comparedBelief[i]) > 1e-6);
    await primary.end();
    await compare.end();
    if (!diverged) fail("belief bars did not diverge across models on identical inputs");
    console.log("ACCEPTANCE side-by-side: PASS (same inputs, models' displayed beliefs diverge)");
  } finally {
    server?.kill();
  }
}

main().catch((err) => fail(String(err)));
