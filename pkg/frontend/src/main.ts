// Entry point: wire the session client, reducer, inputs, and renderers.
// Query parameters: ?server=http://127.0.0.1:8000&scenario=nav_team&model=sequence&seed=0

import { SessionClient, submitToAll } from "./client.js";
import { dragToForce, keyToAgent, keyToForce, nearestAgent } from "./input.js";
import { renderBeliefBars, renderScene, renderStatus, renderSummary, WorkspaceTransform } from "./render.js";
import { initialViewState, reduce, type Action, type ViewState } from "./state.js";
import type { Snapshot } from "./types.js";

const params = new URLSearchParams(window.location.search);
const server = params.get("server") ?? "http://127.0.0.1:8000";
const scenarioId = params.get("scenario") ?? "nav_team";
const model = params.get("model") ?? "sequence";
// optional side-by-side: a second session under another model receives the
// same inputs, e.g. ?model=sequence&compare=independent
const compareModel = params.get("compare");
const seed = parseInt(params.get("seed") ?? "0", 10);
const keyGain = parseFloat(params.get("gain") ?? "1.0");

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const beliefEl = document.getElementById("belief")!;
const statusEl = document.getElementById("status")!;
const summaryEl = document.getElementById("summary")!;
const doneButton = document.getElementById("done") as HTMLButtonElement;

let state: ViewState = initialViewState();
let transform: WorkspaceTransform | null = null;
let frameRequested = false;

function render(): void {
  frameRequested = false;
  if (transform) renderScene(ctx, state, transform);
  renderBeliefBars(beliefEl, state);
  renderStatus(statusEl, state);
  renderSummary(summaryEl, state);
}

function dispatch(action: Action): void {
  state = reduce(state, action);
  if (!frameRequested) {
    frameRequested = true;
    requestAnimationFrame(render);
  }
}

const client = new SessionClient(server, {
  onSnapshot: (snapshot: Snapshot) => dispatch({ type: "event", snapshot }),
  onCorrectionAck: (ack) =>
    dispatch({ type: "correction-ack", snapshot: ack, clamped: ack.clamped }),
  onConnection: (status) => dispatch({ type: "connection", status }),
});

const compareClient = compareModel
  ? new SessionClient(server, {
      onSnapshot: (snapshot: Snapshot) => {
        if (snapshot.kind === "belief-update") dispatch({ type: "compare-event", snapshot });
      },
      onCorrectionAck: (ack) => dispatch({ type: "compare-event", snapshot: ack }),
      onConnection: () => {},
    })
  : null;

function correctionTargets(): SessionClient[] {
  return compareClient ? [client, compareClient] : [client];
}

async function start(): Promise<void> {
  const scenarios = await client.listScenarios();
  const scenario = scenarios.find((s) => s.scenario_id === scenarioId);
  if (!scenario) {
    statusEl.textContent = `unknown scenario ${scenarioId}; available: ${scenarios
      .map((s) => s.scenario_id)
      .join(", ")}`;
    return;
  }
  dispatch({ type: "scenario", scenario });
  transform = new WorkspaceTransform(scenario.workspace, canvas.width, canvas.height);
  const created = await client.createSession(scenarioId, model, seed, "auto", 5.0);
  dispatch({ type: "session", sessionId: created.session_id, snapshot: created.snapshot });
  client.connectStream();
  if (compareClient && compareModel) {
    await compareClient.createSession(scenarioId, compareModel, seed, "auto", 5.0);
    dispatch({ type: "compare-model", model: compareModel });
    compareClient.connectStream();
  }
}

window.addEventListener("keydown", (ev) => {
  if (state.done) return;
  const agent = keyToAgent(ev.key, state.scenario?.num_agents ?? 1);
  if (agent !== null) {
    dispatch({ type: "select-agent", agent });
    return;
  }
  const force = keyToForce(ev.key, state.selectedAgent, keyGain);
  if (force) {
    ev.preventDefault();
    void submitToAll(correctionTargets(), state.clock + 1, force.agent, force.force).catch(
      (err) => {
        statusEl.textContent = `correction rejected: ${err}`;
      },
    );
  }
});

let dragStart: [number, number] | null = null;
canvas.addEventListener("pointerdown", (ev) => {
  if (!transform) return;
  const rect = canvas.getBoundingClientRect();
  const p = transform.toWorkspace(ev.clientX - rect.left, ev.clientY - rect.top);
  dispatch({ type: "select-agent", agent: nearestAgent(p, state.agentPositions) });
  dragStart = p;
});

canvas.addEventListener("pointerup", (ev) => {
  if (!transform || dragStart === null) return;
  const rect = canvas.getBoundingClientRect();
  const end = transform.toWorkspace(ev.clientX - rect.left, ev.clientY - rect.top);
  const bound = state.scenario?.force_bound ?? 1.0;
  const input = dragToForce(dragStart, end, state.selectedAgent, bound);
  dragStart = null;
  if (input && !state.done) {
    void submitToAll(correctionTargets(), state.clock + 1, input.agent, input.force).catch(
      (err) => {
        statusEl.textContent = `correction rejected: ${err}`;
      },
    );
  }
});

doneButton.addEventListener("click", () => {
  void compareClient?.end().catch(() => {});
  void client.end().then((summary) => dispatch({ type: "ended", summary }));
});

void start().catch((err) => {
  statusEl.textContent = `failed to start: ${err}`;
});
