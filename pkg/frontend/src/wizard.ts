// Calibration wizard: tare every corner with the chair unloaded, then derive
// each corner's scale from a known mass. Each step is one API call against
// the device session, which stores the resulting calibration server-side.

import { ApiClient, CHANNELS, Calibration, Channel } from "./api.js";

export type WizardPhase =
  | { step: "idle" }
  | { step: "taring"; channel: Channel }
  | { step: "awaiting-mass"; channel: Channel }
  | { step: "scaling"; channel: Channel }
  | { step: "done" };

export interface WizardResult {
  calibration: Record<Channel, Calibration>;
}

export class CalibrationWizard {
  phase: WizardPhase = { step: "idle" };
  readonly tares: Partial<Record<Channel, number>> = {};
  readonly scales: Partial<Record<Channel, number>> = {};

  constructor(
    private readonly api: ApiClient,
    readonly massKg: number,
    readonly readings: number = 20,
    private readonly onChange: (phase: WizardPhase) => void = () => {},
  ) {}

  private setPhase(phase: WizardPhase): void {
    this.phase = phase;
    this.onChange(phase);
  }

  /** Tare all four corners; the operator confirms the chair is unloaded first. */
  async tareAll(): Promise<void> {
    for (const channel of CHANNELS) {
      this.setPhase({ step: "taring", channel });
      const result = await this.api.tare(channel, this.readings);
      this.tares[channel] = result.tare_counts;
    }
    this.setPhase({ step: "awaiting-mass", channel: CHANNELS[0] });
  }

  /** Scale one corner; the operator placed the known mass on it. */
  async scaleCorner(channel: Channel): Promise<number> {
    this.setPhase({ step: "scaling", channel });
    const result = await this.api.scale(channel, this.massKg, this.readings);
    this.scales[channel] = result.scale_counts_per_kg;
    const next = CHANNELS[CHANNELS.indexOf(channel) + 1];
    this.setPhase(next ? { step: "awaiting-mass", channel: next } : { step: "done" });
    return result.scale_counts_per_kg;
  }

  /** Full unattended run (simulated chair): tare everything, scale everything. */
  async runAll(): Promise<WizardResult> {
    await this.tareAll();
    for (const channel of CHANNELS) {
      await this.scaleCorner(channel);
    }
    return { calibration: this.result() };
  }

  result(): Record<Channel, Calibration> {
    const out = {} as Record<Channel, Calibration>;
    for (const channel of CHANNELS) {
      const tare = this.tares[channel];
      const scale = this.scales[channel];
      if (tare === undefined || scale === undefined) {
        throw new Error(`calibration incomplete for ${channel}`);
      }
      out[channel] = { tare_counts: tare, scale_counts_per_kg: scale };
    }
    return out;
  }
}
