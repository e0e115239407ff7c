// HTTP/SSE session client. All outbound corrections pass through one queue
// with at most a single request in flight, so server-side ordering matches
// the order the user acted in.

import { subscribe, type SSEHandle } from "./sse.js";
import type {
  CorrectionAck,
  ScenarioInfo,
  SessionCreated,
  SessionSummary,
  Snapshot,
} from "./types.js";

export interface ClientEvents {
  onSnapshot(snapshot: Snapshot): void;
  onCorrectionAck(ack: CorrectionAck): void;
  onConnection(status: "connecting" | "live" | "degraded" | "closed"): void;
}

interface QueuedCorrection {
  timestep: number;
  agent: number;
  force: [number, number];
  resolve(ack: CorrectionAck): void;
  reject(err: unknown): void;
}

export class SessionClient {
  private stream: SSEHandle | null = null;
  private queue: QueuedCorrection[] = [];
  private inFlight = false;
  private closed = false;
  sessionId: string | null = null;

  constructor(
    private baseUrl: string,
    private events: ClientEvents,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  async listScenarios(): Promise<ScenarioInfo[]> {
    const r = await this.fetchImpl(`${this.baseUrl}/scenarios`);
    if (!r.ok) throw new Error(`scenario listing failed: ${r.status}`);
    return (await r.json()) as ScenarioInfo[];
  }

  async createSession(
    scenarioId: string,
    model: string,
    seed: number,
    mode: "auto" | "stepped" = "auto",
    tickRate = 5.0,
  ): Promise<SessionCreated> {
    const r = await this.fetchImpl(`${this.baseUrl}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        scenario_id: scenarioId,
        model,
        seed,
        mode,
        tick_rate: tickRate,
      }),
    });
    if (!r.ok) {
      const detail = await r.text();
      throw new Error(`session create failed (${r.status}): ${detail}`);
    }
    const created = (await r.json()) as SessionCreated;
    this.sessionId = created.session_id;
    return created;
  }

  /** Subscribe to the event stream, reconnecting with backoff until closed. */
  connectStream(): void {
    if (this.sessionId === null) throw new Error("no session");
    const sessionId = this.sessionId;
    let attempt = 0;
    const open = () => {
      if (this.closed) return;
      this.events.onConnection(attempt === 0 ? "connecting" : "degraded");
      this.stream = subscribe(
        `${this.baseUrl}/sessions/${sessionId}/events`,
        (data) => {
          attempt = 0;
          this.events.onConnection("live");
          this.events.onSnapshot(JSON.parse(data) as Snapshot);
        },
        () => {
          if (this.closed) return;
          this.events.onConnection("degraded");
          attempt += 1;
          setTimeout(open, Math.min(5000, 250 * 2 ** attempt));
        },
      );
    };
    open();
  }

  /** Queue a correction; at most one is in flight at any time. */
  submitCorrection(timestep: number, agent: number, force: [number, number]): Promise<CorrectionAck> {
    return new Promise((resolve, reject) => {
      this.queue.push({ timestep, agent, force, resolve, reject });
      void this.pump();
    });
  }

  get pendingCorrections(): number {
    return this.queue.length + (this.inFlight ? 1 : 0);
  }

  private async pump(): Promise<void> {
    if (this.inFlight || this.closed) return;
    const next = this.queue.shift();
    if (!next) return;
    this.inFlight = true;
    try {
      const r = await this.fetchImpl(`${this.baseUrl}/sessions/${this.sessionId}/corrections`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({
          timestep: next.timestep,
          agent: next.agent,
          force: next.force,
        }),
      });
      if (!r.ok) {
        next.reject(new Error(`correction rejected (${r.status}): ${await r.text()}`));
      } else {
        const ack = (await r.json()) as CorrectionAck;
        this.events.onCorrectionAck(ack);
        next.resolve(ack);
      }
    } catch (err) {
      next.reject(err);
    } finally {
      this.inFlight = false;
      void this.pump();
    }
  }

  async tick(): Promise<Snapshot> {
    const r = await this.fetchImpl(`${this.baseUrl}/sessions/${this.sessionId}/tick`, {
      method: "POST",
    });
    if (!r.ok) throw new Error(`tick failed: ${r.status}`);
    return (await r.json()) as Snapshot;
  }

  async end(): Promise<SessionSummary> {
    this.closed = true;
    this.stream?.close();
    const r = await this.fetchImpl(`${this.baseUrl}/sessions/${this.sessionId}`, {
      method: "DELETE",
    });
    if (!r.ok) throw new Error(`end failed: ${r.status}`);
    this.events.onConnection("closed");
    return (await r.json()) as SessionSummary;
  }

  close(): void {
    this.closed = true;
    this.stream?.close();
  }
}

/**
 * Fan one correction out to several sessions (side-by-side model
 * comparison): every session receives the identical input, each through its
 * own single-flight queue.
 */
export function submitToAll(
  clients: SessionClient[],
  timestep: number,
  agent: number,
  force: [number, number],
): Promise<CorrectionAck[]> {
  return Promise.all(clients.map((c) => c.submitCorrection(timestep, agent, force)));
}
