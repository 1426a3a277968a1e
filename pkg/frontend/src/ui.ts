// DOM wiring for the teleop client.  All displayed numbers come straight
// from the latest obs message; the UI never simulates anything itself.

import { GatewayClient } from "./client.js";
import {
  AxisInputs,
  composeDv,
  ObsMessage,
  PACE_HZ,
  Triple,
} from "./protocol.js";

const KEY_BINDINGS: Record<string, { axis: number; sign: number }> = {
  ArrowRight: { axis: 0, sign: +1 },
  ArrowLeft: { axis: 0, sign: -1 },
  ArrowUp: { axis: 1, sign: +1 },
  ArrowDown: { axis: 1, sign: -1 },
  KeyW: { axis: 2, sign: +1 },
  KeyS: { axis: 2, sign: -1 },
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export class TeleopUi {
  private client: GatewayClient | null = null;
  private ticker: number | null = null;
  private held = new Set<string>();
  private canvas = el<HTMLCanvasElement>("view");
  private banner = el<HTMLDivElement>("banner");
  private status = el<HTMLSpanElement>("status");
  private urlInput = el<HTMLInputElement>("url");
  private instruction = el<HTMLInputElement>("instruction");
  private category = el<HTMLSelectElement>("category");
  private sampleCount = el<HTMLSpanElement>("samples");
  private recordDot = el<HTMLSpanElement>("recdot");
  private sliders = [
    el<HTMLInputElement>("slider-x"),
    el<HTMLInputElement>("slider-y"),
    el<HTMLInputElement>("slider-z"),
  ];

  constructor() {
    el<HTMLButtonElement>("connect").onclick = () => this.connect();
    el<HTMLButtonElement>("rec-start").onclick = () => this.recordStart();
    el<HTMLButtonElement>("rec-stop").onclick = () => this.recordStop();
    el<HTMLButtonElement>("reset").onclick = () => this.reset();
    el<HTMLButtonElement>("zero").onclick = () => {
      for (const s of this.sliders) s.value = "0";
    };
    el<HTMLButtonElement>("send-instruction").onclick = () => {
      void this.client?.request({
        type: "set_instruction",
        text: this.instruction.value,
      });
    };
    el<HTMLButtonElement>("run-eval").onclick = () => this.runEval();
    window.addEventListener("keydown", (ev) => {
      if (ev.code in KEY_BINDINGS && !this.isTyping(ev)) {
        this.held.add(ev.code);
        ev.preventDefault();
      }
    });
    window.addEventListener("keyup", (ev) => this.held.delete(ev.code));
    this.setConnected(false);
  }

  private isTyping(ev: KeyboardEvent): boolean {
    return ev.target instanceof HTMLInputElement;
  }

  private setConnected(connected: boolean): void {
    this.status.textContent = connected ? "connected" : "disconnected";
    this.status.className = connected ? "ok" : "bad";
    for (const id of ["rec-start", "rec-stop", "reset", "send-instruction", "run-eval"]) {
      el<HTMLButtonElement>(id).disabled = !connected;
    }
    for (const s of this.sliders) s.disabled = !connected;
    el<HTMLButtonElement>("connect").textContent = connected ? "reconnect" : "connect";
  }

  connect(): void {
    this.client?.close();
    if (this.ticker !== null) {
      clearInterval(this.ticker);
      this.ticker = null;
    }
    this.note("connecting...");
    const client = new GatewayClient(this.urlInput.value, {
      onObs: (obs) => this.renderObs(obs),
      onStatus: (up) => {
        this.setConnected(up);
        if (!up) this.note("disconnected - press connect to retry");
      },
      onServerMessage: (msg) => {
        if (msg.type === "error") this.note(`gateway error: ${msg.message}`);
      },
      onProtocolError: (err) => this.note(`protocol error: ${err.message}`),
    });
    this.client = client;
    client.ready
      .then(() => {
        this.note("session ready");
        this.startTicker();
      })
      .catch((err) => this.note(`connect failed: ${err.message}`));
  }

  // Lockstep pacing: one act per tick; idle ticks send a zero increment
  // so the obs stream (and any recording) keeps flowing.
  private startTicker(): void {
    this.ticker = setInterval(() => {
      const client = this.client;
      if (!client || !client.connected || client.inFlight) return;
      void client.act(this.currentDv()).catch(() => undefined);
    }, 1000 / PACE_HZ) as unknown as number;
  }

  private currentDv(): Triple {
    const keys: Triple = [0, 0, 0];
    for (const code of this.held) {
      const bind = KEY_BINDINGS[code];
      keys[bind.axis] += bind.sign;
    }
    const inputs: AxisInputs = {
      keys,
      sliders: this.sliders.map((s) => Number(s.value)) as Triple,
    };
    return composeDv(inputs);
  }

  private renderObs(obs: ObsMessage): void {
    const frame = obs.frames[obs.frames.length - 1];
    const img = new Image();
    img.onload = () => {
      const ctx = this.canvas.getContext("2d");
      if (ctx) ctx.drawImage(img, 0, 0);
    };
    img.src = `data:image/png;base64,${frame}`;

    const st = obs.state;
    el<HTMLSpanElement>("ro-t").textContent = String(obs.t);
    el<HTMLSpanElement>("ro-p").textContent =
      `(${st.p[0].toFixed(2)}, ${st.p[1].toFixed(2)}) mm`;
    el<HTMLSpanElement>("ro-psi").textContent =
      `${((st.psi * 180) / Math.PI).toFixed(1)} deg`;
    el<HTMLSpanElement>("ro-z").textContent = `${st.z.toFixed(2)} mm`;
    el<HTMLSpanElement>("ro-h").textContent = st.h.map((x) => x.toFixed(2)).join(" / ");
    el<HTMLSpanElement>("ro-v").textContent = st.v.map((x) => x.toFixed(2)).join(" / ");
    el<HTMLSpanElement>("ro-clip").textContent = obs.clipped ? "clipped" : "";
    this.sampleCount.textContent = String(obs.samples);
    this.recordDot.className = obs.recording ? "rec on" : "rec";
  }

  private note(text: string): void {
    this.banner.textContent = text;
  }

  private recordStart(): void {
    const client = this.client;
    if (!client) return;
    if (client.latestObs?.recording) {
      this.note("already recording");
      return;
    }
    void client
      .request({
        type: "record_start",
        task_category: this.category.value,
        instruction: this.instruction.value,
      })
      .then((reply) => {
        if (reply.type === "obs") this.note("recording started");
      });
  }

  private recordStop(): void {
    const client = this.client;
    if (!client) return;
    if (!client.latestObs?.recording) {
      this.note("not recording - nothing sent");
      return;
    }
    void client.request({ type: "record_stop" }).then((reply) => {
      if (reply.type === "ack") {
        this.note(`episode saved: ${reply.episode_dir} (${reply.samples} samples)`);
      }
    });
  }

  private reset(): void {
    void this.client?.request({ type: "reset", randomize_pose: true });
  }

  private runEval(): void {
    const primitive = el<HTMLSelectElement>("eval-kind").value;
    this.note(`evaluating ${primitive}...`);
    void this.client
      ?.request({ type: "eval", primitive, trials: 5 })
      .then((reply) => {
        if (reply.type === "eval_result") {
          const pct = (reply.rate * 100).toFixed(0);
          this.note(
            `${reply.motion_type}: ${reply.successes}/${reply.trials} trials (${pct}%)` +
              (reply.rate >= 0.9 ? " - success" : ""),
          );
        }
      });
  }
}
