// The single view-state reducer. Stream events and user interactions flow
// through here; rendering only ever reads the result. The client never
// computes probabilities or rewards itself - belief values are whatever the
// server last sent.

import type { BeliefEntry, ScenarioInfo, SessionSummary, Snapshot } from "./types.js";

export type ConnectionStatus = "connecting" | "live" | "degraded" | "closed";

export interface ViewState {
  scenario: ScenarioInfo | null;
  sessionId: string | null;
  clock: number;
  horizon: number;
  agentPositions: number[][];
  plan: number[][][];
  deformed: number[][][] | null;
  belief: BeliefEntry[];
  corrections: number;
  selectedAgent: number;
  connection: ConnectionStatus;
  lastEventKind: string | null;
  lastSeq: number;
  clampedFlash: boolean;
  trails: number[][][]; // executed positions per tick, for motion trails
  done: boolean;
  summary: SessionSummary | null;
  // side-by-side comparison: a second session fed the same inputs under a
  // different inference model; only its belief is displayed
  compareModel: string | null;
  compareBelief: BeliefEntry[] | null;
}

export function initialViewState(): ViewState {
  return {
    scenario: null,
    sessionId: null,
    clock: 0,
    horizon: 0,
    agentPositions: [],
    plan: [],
    deformed: null,
    belief: [],
    corrections: 0,
    selectedAgent: 0,
    connection: "connecting",
    lastEventKind: null,
    lastSeq: -1,
    clampedFlash: false,
    trails: [],
    done: false,
    summary: null,
    compareModel: null,
    compareBelief: null,
  };
}

export type Action =
  | { type: "scenario"; scenario: ScenarioInfo }
  | { type: "session"; sessionId: string; snapshot: Snapshot }
  | { type: "event"; snapshot: Snapshot }
  | { type: "correction-ack"; snapshot: Snapshot; clamped: boolean }
  | { type: "select-agent"; agent: number }
  | { type: "connection"; status: ConnectionStatus }
  | { type: "ended"; summary: SessionSummary }
  | { type: "compare-model"; model: string }
  | { type: "compare-event"; snapshot: Snapshot };

function applySnapshot(state: ViewState, snap: Snapshot): ViewState {
  // snapshots replace state wholesale: a reconnect must not duplicate trails
  const isNewTick = snap.kind === "tick" && snap.clock !== state.clock;
  const trails =
    snap.kind === "snapshot"
      ? state.trails.slice(0, snap.clock)
      : isNewTick
        ? [...state.trails, snap.agent_positions]
        : state.trails;
  return {
    ...state,
    clock: snap.clock,
    horizon: snap.horizon,
    agentPositions: snap.agent_positions,
    plan: snap.plan.waypoints,
    deformed: snap.corrections > 0 ? snap.deformed.waypoints : null,
    belief: snap.belief,
    corrections: snap.corrections,
    lastEventKind: snap.kind,
    lastSeq: snap.seq,
    trails,
    done: snap.done,
  };
}

export function reduce(state: ViewState, action: Action): ViewState {
  switch (action.type) {
    case "scenario":
      return { ...state, scenario: action.scenario };
    case "session":
      return {
        ...applySnapshot(state, action.snapshot),
        sessionId: action.sessionId,
        connection: "live",
        trails: [],
        summary: null,
      };
    case "event":
      return applySnapshot(state, action.snapshot);
    case "correction-ack":
      return { ...applySnapshot(state, action.snapshot), clampedFlash: action.clamped };
    case "select-agent": {
      const count = state.scenario?.num_agents ?? 1;
      if (action.agent < 0 || action.agent >= count) return state;
      return { ...state, selectedAgent: action.agent };
    }
    case "connection":
      return { ...state, connection: action.status };
    case "ended":
      return { ...state, summary: action.summary, connection: "closed", done: true };
    case "compare-model":
      return { ...state, compareModel: action.model };
    case "compare-event":
      return { ...state, compareBelief: action.snapshot.belief };
  }
}
