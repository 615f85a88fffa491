import { afterAll, beforeAll, expect, inject, test } from "vitest";

import { ApiClient } from "../src/api.js";
import { LabelingQueue } from "../src/queue.js";

const api = new ApiClient(inject("serverUrl"));

async function recordUnlabeledTrial(userId: string): Promise<string> {
  // Drive the simulated device end to end so the queue sees a real trial.
  const { trial_id } = await api.startTrial({ user_id: userId, mode: "train", duration_s: 2.0 });
  const deadline = Date.now() + 20_000;
  for (;;) {
    const rows = await api.listTrials("train", { user_id: userId });
    if (rows.length > 0) return trial_id;
    if (Date.now() > deadline) throw new Error("trial never reached the store");
    await new Promise((r) => setTimeout(r, 100));
  }
}

beforeAll(async () => {
  await api.openSession({ rate_hz: 10, seed: 21, time_scale: 100 });
});

afterAll(async () => {
  await api.closeSession();
});

test("labeling a queued trial bumps the revision and empties it from the queue", async () => {
  const trialId = await recordUnlabeledTrial("queue-user");

  const queue = new LabelingQueue(api);
  const items = await queue.refresh();
  const mine = items.filter((t) => t.payload.trial_id === trialId);
  expect(mine).toHaveLength(1);
  expect(mine[0].status).toBe("unlabeled");
  expect(mine[0].revision).toBe(1);

  const revision = await queue.submitLabel(trialId, "moderate");
  expect(revision).toBe(2);
  expect(queue.items.some((t) => t.payload.trial_id === trialId)).toBe(false);

  const after = await queue.refresh();
  expect(after.some((t) => t.payload.trial_id === trialId)).toBe(false);

  const stored = await api.getTrial("train", trialId);
  expect(stored.status).toBe("labeled");
  expect(stored.payload.label).toBe("moderate");
  expect(stored.revision).toBe(2);
});

test("queue serves the server-rendered plot for each trial", async () => {
  const trialId = await recordUnlabeledTrial("plot-user");
  const queue = new LabelingQueue(api);
  await queue.refresh();
  const resp = await fetch(queue.plotUrl(trialId));
  expect(resp.status).toBe(200);
  expect(resp.headers.get("content-type")).toContain("image/svg+xml");
  const body = await resp.text();
  expect(body.startsWith("<svg")).toBe(true);
  await queue.submitLabel(trialId, "weak");
});

test("relabeling via the API is reflected with a revision audit", async () => {
  const trialId = await recordUnlabeledTrial("relabel-user");
  const queue = new LabelingQueue(api);
  await queue.refresh();
  expect(await queue.submitLabel(trialId, "weak")).toBe(2);
  const second = await api.setLabel(trialId, "strong");
  expect(second.revision).toBe(3);
  const stored = await api.getTrial("train", trialId);
  expect(stored.payload.label).toBe("strong");
});
