// Canvas rendering: workspace geometry, robot trails, plan and deformed
// ghost polylines, belief bars. Reads the immutable view state only.

import type { ViewState } from "./state.js";

const AGENT_COLORS = ["#2563eb", "#db2777", "#059669", "#d97706"];

export class WorkspaceTransform {
  constructor(
    private workspace: number[][],
    private width: number,
    private height: number,
    private margin = 24,
  ) {}

  toCanvas(p: number[]): [number, number] {
    const [lo, hi] = this.workspace;
    const sx = (this.width - 2 * this.margin) / (hi[0] - lo[0]);
    const sy = (this.height - 2 * this.margin) / (hi[1] - lo[1]);
    const s = Math.min(sx, sy);
    return [
      this.margin + (p[0] - lo[0]) * s,
      this.height - this.margin - (p[1] - lo[1]) * s,
    ];
  }

  toWorkspace(x: number, y: number): [number, number] {
    const [lo, hi] = this.workspace;
    const sx = (this.width - 2 * this.margin) / (hi[0] - lo[0]);
    const sy = (this.height - 2 * this.margin) / (hi[1] - lo[1]);
    const s = Math.min(sx, sy);
    return [lo[0] + (x - this.margin) / s, lo[1] + (this.height - this.margin - y) / s];
  }
}

function agentPolyline(waypoints: number[][][], agent: number): number[][] {
  return waypoints.map((step) => step[agent]);
}

export function renderScene(
  ctx: CanvasRenderingContext2D,
  state: ViewState,
  transform: WorkspaceTransform,
): void {
  const scenario = state.scenario;
  if (!scenario) return;
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);

  for (const zone of scenario.danger_zones) {
    const [cx, cy] = transform.toCanvas(zone.center);
    const [ex] = transform.toCanvas([zone.center[0] + zone.radius, zone.center[1]]);
    ctx.beginPath();
    ctx.arc(cx, cy, ex - cx, 0, 2 * Math.PI);
    ctx.fillStyle = "rgba(220, 38, 38, 0.18)";
    ctx.fill();
    ctx.strokeStyle = "rgba(220, 38, 38, 0.5)";
    ctx.stroke();
  }

  for (const goal of scenario.goal_regions) {
    const [cx, cy] = transform.toCanvas(goal.center);
    const [ex] = transform.toCanvas([goal.center[0] + goal.radius, goal.center[1]]);
    ctx.beginPath();
    ctx.arc(cx, cy, ex - cx, 0, 2 * Math.PI);
    ctx.fillStyle = "rgba(22, 163, 74, 0.15)";
    ctx.fill();
    ctx.strokeStyle = "rgba(22, 163, 74, 0.6)";
    ctx.stroke();
    ctx.fillStyle = "#166534";
    ctx.font = "12px sans-serif";
    ctx.fillText(goal.label, cx - 12, cy + 4);
  }

  const drawPolyline = (points: number[][], color: string, dashed: boolean, width = 2) => {
    if (points.length < 2) return;
    ctx.beginPath();
    ctx.setLineDash(dashed ? [6, 5] : []);
    ctx.lineWidth = width;
    ctx.strokeStyle = color;
    const [x0, y0] = transform.toCanvas(points[0]);
    ctx.moveTo(x0, y0);
    for (const p of points.slice(1)) {
      const [x, y] = transform.toCanvas(p);
      ctx.lineTo(x, y);
    }
    ctx.stroke();
    ctx.setLineDash([]);
  };

  for (let a = 0; a < scenario.num_agents; a++) {
    const color = AGENT_COLORS[a % AGENT_COLORS.length];
    if (state.deformed) {
      drawPolyline(agentPolyline(state.deformed, a), color + "66", true, 1.5);
    }
    drawPolyline(agentPolyline(state.plan, a), color, false, 2);
    if (state.trails.length > 1) {
      drawPolyline(state.trails.map((step) => step[a]), color + "33", false, 5);
    }
  }

  state.agentPositions.forEach((p, a) => {
    const [x, y] = transform.toCanvas(p);
    ctx.beginPath();
    ctx.arc(x, y, a === state.selectedAgent ? 9 : 6, 0, 2 * Math.PI);
    ctx.fillStyle = AGENT_COLORS[a % AGENT_COLORS.length];
    ctx.fill();
    if (a === state.selectedAgent) {
      ctx.lineWidth = 2;
      ctx.strokeStyle = "#111827";
      ctx.stroke();
    }
    ctx.fillStyle = "#111827";
    ctx.font = "11px sans-serif";
    ctx.fillText(String(a + 1), x + 10, y - 8);
  });
}

export function renderBeliefBars(container: HTMLElement, state: ViewState): void {
  const labels = state.scenario?.theta_labels ?? [];
  container.innerHTML = "";

  const renderSet = (entries: { theta_index: number; probability: number }[], title?: string) => {
    if (title) {
      const heading = document.createElement("div");
      heading.className = "belief-heading";
      heading.textContent = title;
      container.appendChild(heading);
    }
    for (const entry of entries) {
      const row = document.createElement("div");
      row.className = "belief-row";
      const label = document.createElement("span");
      label.className = "belief-label";
      label.textContent = labels[entry.theta_index] ?? `candidate ${entry.theta_index}`;
      const bar = document.createElement("div");
      bar.className = "belief-bar";
      const fill = document.createElement("div");
      fill.className = "belief-fill";
      fill.style.width = `${(entry.probability * 100).toFixed(1)}%`;
      const value = document.createElement("span");
      value.className = "belief-value";
      value.textContent = entry.probability.toFixed(3);
      bar.appendChild(fill);
      row.append(label, bar, value);
      container.appendChild(row);
    }
  };

  if (state.compareBelief) {
    renderSet(state.belief, "primary model");
    renderSet(state.compareBelief, `compared: ${state.compareModel ?? "?"}`);
  } else {
    renderSet(state.belief);
  }
}

export function renderStatus(el: HTMLElement, state: ViewState): void {
  const bits = [
    `clock ${state.clock}/${state.horizon}`,
    `corrections ${state.corrections}`,
    `agent ${state.selectedAgent + 1} selected`,
    state.connection,
  ];
  if (state.clampedFlash) bits.push("force clamped");
  if (state.done) bits.push("episode over");
  el.textContent = bits.join(" | ");
  el.className = `status status-${state.connection}`;
}

export function renderSummary(el: HTMLElement, state: ViewState): void {
  if (!state.summary) {
    el.hidden = true;
    return;
  }
  const labels = state.scenario?.theta_labels ?? [];
  const s = state.summary;
  const predicted = labels[s.predicted_theta_index] ?? String(s.predicted_theta_index);
  const truth =
    s.true_theta_index === null
      ? "not revealed"
      : labels[s.true_theta_index] ?? String(s.true_theta_index);
  el.hidden = false;
  el.innerHTML = "";
  const heading = document.createElement("h2");
  heading.textContent = "Episode summary";
  const verdict = document.createElement("p");
  verdict.textContent = `robot's guess: ${predicted} - true preference: ${truth}`;
  const beliefs = document.createElement("p");
  beliefs.textContent = `final belief: [${s.final_belief.map((p) => p.toFixed(4)).join(", ")}]`;
  const link = document.createElement("a");
  link.textContent = "download episode log";
  link.href = URL.createObjectURL(
    new Blob([JSON.stringify(s, null, 2)], { type: "application/json" }),
  );
  link.download = `${s.session_id}.summary.json`;
  el.append(heading, verdict, beliefs, link);
}
