// Keyboard and pointer input mapped onto correction forces.

export interface ForceInput {
  agent: number;
  force: [number, number];
}

const ARROWS: Record<string, [number, number]> = {
  ArrowUp: [0, 1],
  ArrowDown: [0, -1],
  ArrowLeft: [-1, 0],
  ArrowRight: [1, 0],
};

/** Arrow key -> unit force scaled by the gain; null for other keys. */
export function keyToForce(key: string, selectedAgent: number, gain = 1.0): ForceInput | null {
  const dir = ARROWS[key];
  if (!dir) return null;
  return { agent: selectedAgent, force: [dir[0] * gain, dir[1] * gain] };
}

/** Number keys 1..9 select an agent (0-indexed); null otherwise. */
export function keyToAgent(key: string, numAgents: number): number | null {
  if (!/^[1-9]$/.test(key)) return null;
  const agent = parseInt(key, 10) - 1;
  return agent < numAgents ? agent : null;
}

/**
 * Drag vector (workspace units) -> force, capped at the bound.
 * The drag is an accessibility alternative to the arrow keys: direction is
 * taken as-is, magnitude scales with drag length.
 */
export function dragToForce(
  start: [number, number],
  end: [number, number],
  agent: number,
  forceBound: number,
  unitsPerFullForce = 1.0,
): ForceInput | null {
  const dx = end[0] - start[0];
  const dy = end[1] - start[1];
  const length = Math.hypot(dx, dy);
  if (length < 1e-6) return null;
  const magnitude = Math.min(forceBound, (length / unitsPerFullForce) * forceBound);
  return { agent, force: [(dx / length) * magnitude, (dy / length) * magnitude] };
}

/** Nearest agent to a workspace point, for click-to-select. */
export function nearestAgent(point: [number, number], positions: number[][]): number {
  let best = 0;
  let bestDist = Infinity;
  positions.forEach((p, i) => {
    const d = Math.hypot(p[0] - point[0], p[1] - point[1]);
    if (d < bestDist) {
      bestDist = d;
      best = i;
    }
  });
  return best;
}
