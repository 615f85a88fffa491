// Live trial view model: subscribes to the server's event stream and keeps a
// rolling window of calibrated readings per channel. Points come only from
// the stream; the view never interpolates or invents samples.

import { CHANNELS, Channel } from "./api.js";
import { sseStream } from "./sse.js";

export interface LivePoint {
  t_ms: number;
  kg: number;
}

export interface ChairGeometry {
  width_m: number;
  depth_m: number;
}

export const DEFAULT_GEOMETRY: ChairGeometry = { width_m: 0.4, depth_m: 0.38 };
const COP_LOAD_FLOOR_KG = 2.0;

export interface LiveStats {
  received: number;
  perChannel: Record<Channel, number>;
  lastTrialId: string | null;
  ended: boolean;
  endReason: string | null;
}

export class LiveSession {
  readonly buffers: Record<Channel, LivePoint[]> = {
    front_left: [],
    front_right: [],
    rear_left: [],
    rear_right: [],
  };
  received = 0;
  orderViolations = 0;
  ended = false;
  endReason: string | null = null;
  lastTrialId: string | null = null;
  connected = false;

  private controller = new AbortController();

  constructor(
    readonly windowSeconds: number = 10,
    private readonly onUpdate: () => void = () => {},
  ) {}

  /** Consume the stream until it ends or stop() is called. */
  async run(liveUrl: string): Promise<void> {
    try {
      for await (const { event, data } of sseStream(liveUrl, this.controller.signal)) {
        if (event === "hello") {
          this.connected = true;
        } else if (event === "sample") {
          const sample = data as { t_ms: number; channel: Channel; kg: number };
          this.push(sample.channel, { t_ms: sample.t_ms, kg: sample.kg });
          this.received += 1;
        } else if (event === "trial-complete") {
          this.lastTrialId = (data as { trial_id: string }).trial_id;
        } else if (event === "end") {
          this.endReason = (data as { reason: string }).reason;
          break;
        }
        this.onUpdate();
      }
    } finally {
      this.ended = true;
      this.connected = false;
      this.onUpdate();
    }
  }

  stop(): void {
    this.controller.abort();
  }

  private push(channel: Channel, point: LivePoint): void {
    const buffer = this.buffers[channel];
    if (!buffer) return;
    if (buffer.length > 0 && point.t_ms <= buffer[buffer.length - 1].t_ms) {
      this.orderViolations += 1;
    }
    buffer.push(point);
    const horizon = point.t_ms - this.windowSeconds * 1000;
    while (buffer.length > 0 && buffer[0].t_ms < horizon) {
      buffer.shift();
    }
  }

  /** Latest reading per channel, NaN where nothing arrived yet. */
  latest(): Record<Channel, number> {
    const out = {} as Record<Channel, number>;
    for (const channel of CHANNELS) {
      const buffer = this.buffers[channel];
      out[channel] = buffer.length > 0 ? buffer[buffer.length - 1].kg : NaN;
    }
    return out;
  }

  totalLoad(): number {
    const latest = this.latest();
    let total = 0;
    for (const channel of CHANNELS) {
      const v = latest[channel];
      if (!Number.isNaN(v)) total += v;
    }
    return total;
  }

  /** Load-weighted corner position; null while the chair is effectively empty. */
  centerOfPressure(geometry: ChairGeometry = DEFAULT_GEOMETRY): { x: number; y: number } | null {
    const latest = this.latest();
    const positions: Record<Channel, [number, number]> = {
      front_left: [-geometry.width_m / 2, geometry.depth_m / 2],
      front_right: [geometry.width_m / 2, geometry.depth_m / 2],
      rear_left: [-geometry.width_m / 2, -geometry.depth_m / 2],
      rear_right: [geometry.width_m / 2, -geometry.depth_m / 2],
    };
    let total = 0;
    let x = 0;
    let y = 0;
    for (const channel of CHANNELS) {
      const load = Math.max(latest[channel] || 0, 0);
      total += load;
      x += load * positions[channel][0];
      y += load * positions[channel][1];
    }
    if (total <= COP_LOAD_FLOOR_KG) return null;
    return { x: x / total, y: y / total };
  }

  stats(): LiveStats {
    const perChannel = {} as Record<Channel, number>;
    for (const channel of CHANNELS) {
      perChannel[channel] = this.buffers[channel].length;
    }
    return {
      received: this.received,
      perChannel,
      lastTrialId: this.lastTrialId,
      ended: this.ended,
      endReason: this.endReason,
    };
  }
}
