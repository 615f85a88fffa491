// Labeling queue: unlabeled train trials, polled every couple of seconds.
// Plots are the server-rendered SVGs, so the queue view and any offline
// analysis share one visual source of truth.

import { ApiClient, StoredTrial } from "./api.js";

export class LabelingQueue {
  items: StoredTrial[] = [];
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly onChange: (items: StoredTrial[]) => void = () => {},
  ) {}

  async refresh(): Promise<StoredTrial[]> {
    this.items = await this.api.listAllTrials("train", { status: "unlabeled" });
    this.onChange(this.items);
    return this.items;
  }

  plotUrl(trialId: string): string {
    return this.api.plotUrl("train", trialId);
  }

  /** One PUT per label action; the item leaves the queue on success. */
  async submitLabel(trialId: string, label: string): Promise<number> {
    const result = await this.api.setLabel(trialId, label);
    this.items = this.items.filter((t) => t.payload.trial_id !== trialId);
    this.onChange(this.items);
    return result.revision;
  }

  startPolling(intervalMs = 2000): void {
    this.stopPolling();
    this.timer = setInterval(() => {
      void this.refresh().catch(() => {
        // connection loss is surfaced by the caller's onChange wiring; keep polling
      });
    }, intervalMs);
  }

  stopPolling(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
