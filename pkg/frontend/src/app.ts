// Browser wiring for the operator console. All state lives on the server;
// this file renders it and maps buttons to single API calls.

import { ApiClient, ApiError, CHANNELS, Channel, Mode } from "./api.js";
import { DEFAULT_GEOMETRY, LiveSession } from "./live.js";
import { LabelingQueue } from "./queue.js";
import { CalibrationWizard } from "./wizard.js";

const CHANNEL_COLORS: Record<Channel, string> = {
  front_left: "#1f77b4",
  front_right: "#ff7f0e",
  rear_left: "#2ca02c",
  rear_right: "#d62728",
};
const LABELS = ["weak", "moderate", "strong"];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class Console {
  api: ApiClient | null = null;
  live: LiveSession | null = null;
  queue: LabelingQueue | null = null;
  wizard: CalibrationWizard | null = null;

  readonly status = el<HTMLSpanElement>("status");
  readonly actions = () => document.querySelectorAll<HTMLButtonElement>("button[data-needs-server]");

  setStatus(text: string, kind: "ok" | "bad" | "idle" = "idle"): void {
    this.status.textContent = text;
    this.status.className = `status ${kind}`;
    const disabled = kind === "bad" || this.api === null;
    this.actions().forEach((b) => (b.disabled = disabled));
  }

  fail(err: unknown): void {
    const message = err instanceof ApiError ? `${err.error}: ${err.detail}` : String(err);
    this.setStatus(message, "bad");
  }

  async connect(): Promise<void> {
    const base = el<HTMLInputElement>("server-url").value;
    const api = new ApiClient(base);
    try {
      const health = await api.healthz();
      this.api = api;
      this.setStatus(`connected (${health.trials} trials stored)`, "ok");
      this.queue = new LabelingQueue(api, (items) => this.renderQueue(items));
      await this.queue.refresh();
      this.queue.startPolling(2000);
      this.startLiveView();
    } catch (err) {
      this.api = null;
      this.fail(err);
    }
  }

  // -- device session + wizard -------------------------------------------------

  async openSession(): Promise<void> {
    if (!this.api) return;
    try {
      const rate = Number(el<HTMLSelectElement>("rate").value) as 10 | 80;
      await this.api.openSession({ rate_hz: rate });
      this.setStatus("device session open", "ok");
      this.startLiveView();
    } catch (err) {
      this.fail(err);
    }
  }

  async closeSession(): Promise<void> {
    if (!this.api) return;
    try {
      await this.api.closeSession();
      this.setStatus("device session closed", "ok");
    } catch (err) {
      this.fail(err);
    }
  }

  async wizardStart(): Promise<void> {
    if (!this.api) return;
    const mass = Number(el<HTMLInputElement>("cal-mass").value);
    this.wizard = new CalibrationWizard(this.api, mass, 20, (phase) => {
      el<HTMLDivElement>("wizard-phase").textContent = JSON.stringify(phase);
    });
    try {
      el<HTMLDivElement>("wizard-help").textContent = "Unload the chair completely, then press Tare.";
      el<HTMLButtonElement>("wizard-tare").hidden = false;
    } catch (err) {
      this.fail(err);
    }
  }

  async wizardTare(): Promise<void> {
    if (!this.wizard) return;
    try {
      await this.wizard.tareAll();
      this.renderWizardNext();
    } catch (err) {
      this.fail(err);
    }
  }

  private renderWizardNext(): void {
    const phase = this.wizard?.phase;
    if (!phase) return;
    if (phase.step === "awaiting-mass") {
      el<HTMLDivElement>("wizard-help").textContent =
        `Place the ${this.wizard?.massKg} kg mass on ${phase.channel}, then press Measure.`;
      el<HTMLButtonElement>("wizard-scale").hidden = false;
    } else if (phase.step === "done") {
      el<HTMLButtonElement>("wizard-scale").hidden = true;
      const cal = this.wizard!.result();
      el<HTMLDivElement>("wizard-help").textContent = "Calibration stored in the device session.";
      el<HTMLPreElement>("wizard-result").textContent = JSON.stringify(cal, null, 2);
    }
  }

  async wizardScale(): Promise<void> {
    const phase = this.wizard?.phase;
    if (!this.wizard || !phase || phase.step !== "awaiting-mass") return;
    try {
      await this.wizard.scaleCorner(phase.channel);
      this.renderWizardNext();
    } catch (err) {
      this.fail(err);
    }
  }

  // -- live view -----------------------------------------------------------------

  startLiveView(): void {
    if (!this.api) return;
    this.live?.stop();
    const live = new LiveSession(10, () => this.renderLive());
    this.live = live;
    void live.run(this.api.liveUrl()).catch((err) => this.fail(err));
  }

  async startTrial(): Promise<void> {
    if (!this.api) return;
    const mode = el<HTMLSelectElement>("trial-mode").value as Mode;
    const label = el<HTMLInputElement>("trial-label").value || undefined;
    try {
      const result = await this.api.startTrial({
        user_id: el<HTMLInputElement>("trial-user").value || "operator",
        mode,
        duration_s: Number(el<HTMLInputElement>("trial-duration").value) || 30,
        label: mode === "train" ? label : undefined,
      });
      this.setStatus(`trial ${result.trial_id} running`, "ok");
    } catch (err) {
      this.fail(err);
    }
  }

  async stopTrial(): Promise<void> {
    if (!this.api) return;
    try {
      const result = await this.api.stopTrial();
      this.setStatus(`trial ${result.trial.trial_id}: ${result.trial.status}`, "ok");
      await this.queue?.refresh();
    } catch (err) {
      this.fail(err);
    }
  }

  renderLive(): void {
    const live = this.live;
    if (!live) return;
    const canvas = el<HTMLCanvasElement>("live-chart");
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const windowMs = live.windowSeconds * 1000;
    const newest = Math.max(
      ...CHANNELS.map((c) => {
        const buf = live.buffers[c];
        return buf.length > 0 ? buf[buf.length - 1].t_ms : 0;
      }),
    );
    const t0 = newest - windowMs;
    let peak = 10;
    for (const channel of CHANNELS) {
      for (const point of live.buffers[channel]) peak = Math.max(peak, point.kg);
    }
    for (const channel of CHANNELS) {
      const buffer = live.buffers[channel];
      if (buffer.length === 0) continue;
      ctx.strokeStyle = CHANNEL_COLORS[channel];
      ctx.lineWidth = 1.5;
      ctx.beginPath();
      buffer.forEach((point, i) => {
        const x = ((point.t_ms - t0) / windowMs) * canvas.width;
        const y = canvas.height - (point.kg / (peak * 1.1)) * canvas.height;
        if (i === 0) ctx.moveTo(x, y);
        else ctx.lineTo(x, y);
      });
      ctx.stroke();
    }
    el<HTMLSpanElement>("total-load").textContent = `${live.totalLoad().toFixed(1)} kg`;
    const cop = live.centerOfPressure(DEFAULT_GEOMETRY);
    el<HTMLSpanElement>("cop").textContent = cop
      ? `x=${cop.x.toFixed(3)} m, y=${cop.y.toFixed(3)} m`
      : "chair empty";
    if (live.lastTrialId) {
      el<HTMLSpanElement>("last-trial").textContent = live.lastTrialId;
      void this.queue?.refresh();
      live.lastTrialId = null;
    }
  }

  // -- labeling queue -----------------------------------------------------------

  renderQueue(items: import("./api.js").StoredTrial[]): void {
    const root = el<HTMLDivElement>("queue");
    root.innerHTML = "";
    el<HTMLSpanElement>("queue-count").textContent = String(items.length);
    for (const trial of items) {
      const card = document.createElement("div");
      card.className = "trial-card";
      const title = document.createElement("div");
      title.textContent = `${trial.payload.trial_id} — ${trial.payload.user_id} @ ${trial.payload.started_at} (rev ${trial.revision})`;
      card.appendChild(title);
      const img = document.createElement("img");
      img.src = this.queue!.plotUrl(trial.payload.trial_id);
      img.alt = `trial ${trial.payload.trial_id}`;
      img.width = 450;
      card.appendChild(img);
      const buttons = document.createElement("div");
      for (const label of LABELS) {
        const button = document.createElement("button");
        button.textContent = label;
        button.dataset.needsServer = "1";
        button.onclick = () => {
          void this.queue!.submitLabel(trial.payload.trial_id, label).catch((err) => this.fail(err));
        };
        buttons.appendChild(button);
      }
      card.appendChild(buttons);
      root.appendChild(card);
    }
  }
}

const app = new Console();
el<HTMLButtonElement>("connect").onclick = () => void app.connect();
el<HTMLButtonElement>("session-open").onclick = () => void app.openSession();
el<HTMLButtonElement>("session-close").onclick = () => void app.closeSession();
el<HTMLButtonElement>("wizard-start").onclick = () => void app.wizardStart();
el<HTMLButtonElement>("wizard-tare").onclick = () => void app.wizardTare();
el<HTMLButtonElement>("wizard-scale").onclick = () => void app.wizardScale();
el<HTMLButtonElement>("trial-start").onclick = () => void app.startTrial();
el<HTMLButtonElement>("trial-stop").onclick = () => void app.stopTrial();
app.setStatus("not connected");
