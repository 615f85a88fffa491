import { afterAll, beforeAll, expect, inject, test } from "vitest";

import { ApiClient, CHANNELS } from "../src/api.js";
import { LiveSession } from "../src/live.js";
import { sseStream } from "../src/sse.js";

const api = new ApiClient(inject("serverUrl"));

async function waitFor(predicate: () => boolean, timeoutMs: number, what: string): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!predicate()) {
    if (Date.now() > deadline) throw new Error(`timed out waiting for ${what}`);
    await new Promise((r) => setTimeout(r, 50));
  }
}

test("live endpoint closes cleanly with a no-session event when idle", async () => {
  const events = [];
  for await (const event of sseStream(api.liveUrl())) {
    events.push(event);
  }
  expect(events).toEqual([{ event: "end", data: { reason: "no-session" } }]);
});

test("live view receives at least 95% of a 60-second session's events", async () => {
  // One full 60-second trial; the device session runs at 5x wall-clock so the
  // suite stays quick while the event volume matches a real session.
  await api.openSession({ rate_hz: 10, seed: 11, time_scale: 5 });
  try {
    const live = new LiveSession(10);
    const done = live.run(api.liveUrl());
    await waitFor(() => live.connected, 10_000, "stream hello");

    await api.startTrial({ user_id: "live-user", mode: "train", duration_s: 60.0, seed: 11 });
    await waitFor(() => live.lastTrialId !== null, 45_000, "trial completion");
    live.stop();
    await done.catch(() => {});

    const session = await api.getSession();
    expect(session.emitted_events).toBeGreaterThan(2200); // ~4 x 10 Hz x 60 s
    const ratio = live.received / session.emitted_events;
    expect(ratio).toBeGreaterThanOrEqual(0.95);

    // per-channel ordering preserved, rolling window respected
    expect(live.orderViolations).toBe(0);
    for (const channel of CHANNELS) {
      const buffer = live.buffers[channel];
      expect(buffer.length).toBeGreaterThan(0);
      const span = buffer[buffer.length - 1].t_ms - buffer[0].t_ms;
      expect(span).toBeLessThanOrEqual(10_000);
    }
    expect(Math.abs(live.totalLoad())).toBeLessThan(1.0); // trial ends standing: chair unloaded, noise-level readings
  } finally {
    await api.closeSession();
  }
});

test("center of pressure readout follows the latest loads", async () => {
  const live = new LiveSession(10);
  expect(live.centerOfPressure()).toBeNull(); // empty chair
  // feed synthetic latest readings through the same path the stream uses
  const anyLive = live as unknown as { push(channel: string, p: { t_ms: number; kg: number }): void };
  anyLive.push("front_left", { t_ms: 0, kg: 30 });
  anyLive.push("front_right", { t_ms: 0, kg: 10 });
  anyLive.push("rear_left", { t_ms: 0, kg: 30 });
  anyLive.push("rear_right", { t_ms: 0, kg: 10 });
  const cop = live.centerOfPressure({ width_m: 0.4, depth_m: 0.38 });
  expect(cop).not.toBeNull();
  expect(cop!.x).toBeCloseTo(-0.1, 9);
  expect(cop!.y).toBeCloseTo(0.0, 9);
  expect(live.totalLoad()).toBeCloseTo(80, 9);
});
