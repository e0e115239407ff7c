// Wire types mirroring the session service's JSON payloads.

export interface BeliefEntry {
  theta_index: number;
  probability: number;
}

export interface WireTrajectory {
  dt: number;
  // per step, one [x, y] pair per agent
  waypoints: number[][][];
}

export interface Snapshot {
  seq: number;
  kind: "snapshot" | "created" | "tick" | "belief-update" | "noop";
  clock: number;
  horizon: number;
  agent_positions: number[][];
  plan: WireTrajectory;
  deformed: WireTrajectory;
  belief: BeliefEntry[];
  corrections: number;
  done: boolean;
  timestamp: number;
}

export interface CorrectionAck extends Snapshot {
  clamped: boolean;
  restamped: boolean;
  timestep_used: number;
}

export interface SessionCreated {
  session_id: string;
  mode: string;
  tick_rate: number;
  snapshot: Snapshot;
}

export interface GoalRegion {
  label: string;
  center: number[];
  radius: number;
}

export interface DangerZone {
  center: number[];
  radius: number;
}

export interface ScenarioInfo {
  scenario_id: string;
  num_agents: number;
  horizon: number;
  theta_labels: string[];
  goal_regions: GoalRegion[];
  danger_zones: DangerZone[];
  workspace: number[][];
  starts: number[][];
  true_theta_index: number | null;
  sequence_available: boolean;
  force_bound: number;
}

export interface SessionSummary {
  session_id: string;
  log_path: string;
  final_belief: number[];
  predicted_theta_index: number;
  true_theta_index: number | null;
  events: number;
  warnings: string[];
}
