// Typed client for the ingestion service. Every mutating console action maps
// to exactly one of these calls; the console keeps no trial data of its own.

export const CHANNELS = ["front_left", "front_right", "rear_left", "rear_right"] as const;
export type Channel = (typeof CHANNELS)[number];
export type Mode = "train" | "test";

export interface Calibration {
  tare_counts: number;
  scale_counts_per_kg: number;
}

export interface TrialPayload {
  trial_id: string;
  user_id: string;
  mode: Mode;
  label: string | null;
  started_at: string;
  nominal_rate_hz: number;
  calibration: Record<Channel, Calibration>;
  channels: Record<Channel, [number, number][]>;
}

export interface StoredTrial {
  schema_version: number;
  payload: TrialPayload;
  received_at: string;
  revision: number;
  status: "labeled" | "unlabeled";
}

export interface SessionState {
  session_id: string;
  rate_hz: number;
  time_scale: number;
  calibration: Record<Channel, Calibration>;
  trial: { trial_id: string; status: string; user_id?: string; mode?: string } | null;
  emitted_events: number;
}

export interface TrialQuery {
  user_id?: string;
  label?: string;
  status?: "labeled" | "unlabeled";
  after?: string;
  limit?: number;
  offset?: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly error: string,
    readonly detail: string,
  ) {
    super(`${error} (${status}): ${detail}`);
  }
}

async function check(resp: Response): Promise<Response> {
  if (resp.ok) return resp;
  let error = "HttpError";
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    error = body.error ?? error;
    detail = body.detail ?? detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(resp.status, error, detail);
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string, params?: object): string {
    const u = new URL(`/api/v1${path}`, this.baseUrl);
    for (const [key, value] of Object.entries(params ?? {})) {
      if (value !== undefined) u.searchParams.set(key, String(value));
    }
    return u.toString();
  }

  private async getJson<T>(path: string, params?: object): Promise<T> {
    const resp = await check(await fetch(this.url(path, params)));
    return (await resp.json()) as T;
  }

  private async send<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await check(
      await fetch(this.url(path), {
        method,
        headers: { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      }),
    );
    return (await resp.json()) as T;
  }

  async healthz(): Promise<{ status: string; trials: number }> {
    return this.getJson("/healthz");
  }

  // -- trials ---------------------------------------------------------------

  async listTrials(mode: Mode, query: TrialQuery = {}): Promise<StoredTrial[]> {
    return this.getJson(`/${mode}/trials`, query);
  }

  async listAllTrials(mode: Mode, query: TrialQuery = {}, pageSize = 100): Promise<StoredTrial[]> {
    const all: StoredTrial[] = [];
    let offset = 0;
    for (;;) {
      const page = await this.listTrials(mode, { ...query, limit: pageSize, offset });
      all.push(...page);
      if (page.length < pageSize) return all;
      offset += pageSize;
    }
  }

  async getTrial(mode: Mode, trialId: string): Promise<StoredTrial> {
    return this.getJson(`/${mode}/trials/${trialId}`);
  }

  plotUrl(mode: Mode, trialId: string): string {
    return this.url(`/${mode}/trials/${trialId}/plot.svg`);
  }

  async setLabel(trialId: string, label: string): Promise<{ trial_id: string; revision: number; label: string }> {
    return this.send("PUT", `/train/trials/${trialId}/label`, { label });
  }

  // -- simulated device -------------------------------------------------------

  async openSession(opts: { rate_hz?: number; seed?: number; time_scale?: number } = {}): Promise<{ session_id: string }> {
    return this.send("POST", "/device/session", opts);
  }

  async getSession(): Promise<SessionState> {
    return this.getJson("/device/session");
  }

  async closeSession(): Promise<void> {
    await this.send("DELETE", "/device/session");
  }

  async tare(channel: Channel, n: number): Promise<{ channel: Channel; tare_counts: number }> {
    return this.send("POST", "/device/calibrate/tare", { channel, n });
  }

  async scale(
    channel: Channel,
    knownMassKg: number,
    n: number,
  ): Promise<{ channel: Channel; scale_counts_per_kg: number }> {
    return this.send("POST", "/device/calibrate/scale", { channel, known_mass_kg: knownMassKg, n });
  }

  async startTrial(opts: {
    user_id: string;
    mode: Mode;
    duration_s: number;
    label?: string;
    strength?: string;
    seed?: number;
  }): Promise<{ trial_id: string }> {
    return this.send("POST", "/device/trial/start", opts);
  }

  async stopTrial(): Promise<{ trial: { trial_id: string; status: string } }> {
    return this.send("POST", "/device/trial/stop");
  }

  liveUrl(): string {
    return this.url("/live");
  }
}
