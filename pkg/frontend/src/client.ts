// Lockstep gateway client.  The protocol guarantees exactly one reply per
// request (and one unsolicited obs right after the socket opens), so a
// FIFO of pending resolvers is all the bookkeeping needed.

import {
  ClientMessage,
  ObsMessage,
  ProtocolError,
  ServerMessage,
  encodeClientMessage,
  parseServerMessage,
  Triple,
} from "./protocol.js";

interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

type WebSocketCtor = new (url: string) => WebSocketLike;

export interface ClientEvents {
  onObs?: (obs: ObsMessage) => void;
  onServerMessage?: (msg: ServerMessage) => void;
  onStatus?: (connected: boolean) => void;
  onProtocolError?: (err: Error) => void;
}

export class GatewayClient {
  private sock: WebSocketLike | null = null;
  private pending: Array<{
    resolve: (msg: ServerMessage) => void;
    reject: (err: Error) => void;
  }> = [];
  private readyResolve: ((obs: ObsMessage) => void) | null = null;
  private readyReject: ((err: Error) => void) | null = null;
  readonly ready: Promise<ObsMessage>;
  latestObs: ObsMessage | null = null;
  connected = false;

  constructor(
    url: string,
    private events: ClientEvents = {},
    WebSocketImpl?: WebSocketCtor,
  ) {
    const Ctor =
      WebSocketImpl ??
      ((globalThis as { WebSocket?: WebSocketCtor }).WebSocket as WebSocketCtor);
    if (!Ctor) {
      throw new Error("no WebSocket implementation available");
    }
    this.ready = new Promise<ObsMessage>((resolve, reject) => {
      this.readyResolve = resolve;
      this.readyReject = reject;
    });
    this.sock = new Ctor(url);
    this.sock.onopen = () => {
      this.connected = true;
      this.events.onStatus?.(true);
    };
    this.sock.onmessage = (ev) => this.handleMessage(String(ev.data));
    this.sock.onclose = () => this.handleClose();
    this.sock.onerror = () => this.handleClose();
  }

  private handleMessage(text: string): void {
    let msg: ServerMessage;
    try {
      msg = parseServerMessage(text);
    } catch (err) {
      this.events.onProtocolError?.(err as Error);
      return;
    }
    if (msg.type === "obs") {
      this.latestObs = msg;
      this.events.onObs?.(msg);
    }
    this.events.onServerMessage?.(msg);
    if (this.readyResolve) {
      if (msg.type === "obs") {
        this.readyResolve(msg);
        this.readyResolve = null;
        this.readyReject = null;
        return;
      }
      // something other than the initial obs is a protocol violation
      this.events.onProtocolError?.(
        new ProtocolError(`expected initial obs, got ${msg.type}`),
      );
      return;
    }
    const waiter = this.pending.shift();
    if (waiter) {
      waiter.resolve(msg);
    }
  }

  private handleClose(): void {
    if (!this.connected && this.readyReject) {
      this.readyReject(new Error("connection failed"));
      this.readyReject = null;
      this.readyResolve = null;
    }
    this.connected = false;
    this.events.onStatus?.(false);
    for (const waiter of this.pending.splice(0)) {
      waiter.reject(new Error("connection closed"));
    }
  }

  get inFlight(): boolean {
    return this.pending.length > 0;
  }

  request(msg: ClientMessage): Promise<ServerMessage> {
    if (!this.sock || !this.connected) {
      return Promise.reject(new Error("not connected"));
    }
    return new Promise((resolve, reject) => {
      this.pending.push({ resolve, reject });
      this.sock!.send(encodeClientMessage(msg));
    });
  }

  async act(dv: Triple): Promise<ObsMessage> {
    const reply = await this.request({ type: "act", dv });
    if (reply.type !== "obs") {
      throw new ProtocolError(
        reply.type === "error" ? reply.message : `unexpected ${reply.type}`,
      );
    }
    return reply;
  }

  close(): void {
    this.sock?.close();
    this.sock = null;
  }
}
