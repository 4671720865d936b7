/** Explorer controller: all view state and its transitions.
 *
 * The server owns every piece of math (decoding, neighbor search); this
 * class only chooses inputs, sequences requests, and records responses.
 * Decode responses carry a sequence number so a stale response can never
 * overwrite a newer one, and slider input is debounced so at most one
 * decode is in flight during a drag.
 */

import type { Api, Neighbor } from "./api.js";
import { ApiError } from "./api.js";
import { debounce } from "./debounce.js";

export const SLIDER_BOUND = 3.0;
export const DEBOUNCE_MS = 60;
export const TRAVERSAL_STEPS = 9;
export const TRAVERSAL_RANGE = 2.0;

export interface SsaView {
  dim: number;
  u: number;
  before: Blob;
  after: Blob;
}

export interface ExplorerView {
  char: string | null;
  mu: number[];
  sigma: number[];
  z: number[];
  glyph: Blob | null;
  neighbors: Neighbor[];
  ssa: SsaView | null;
  strip: Blob[] | null;
  stripDim: number | null;
  error: string | null;
}

function emptyView(): ExplorerView {
  return {
    char: null, mu: [], sigma: [], z: [], glyph: null, neighbors: [],
    ssa: null, strip: null, stripDim: null, error: null,
  };
}

export class ExplorerController {
  readonly view: ExplorerView = emptyView();
  private issuedSeq = 0;
  private appliedSeq = 0;
  private listeners: Array<(v: ExplorerView) => void> = [];
  private scheduleDecode: ((z: number[]) => void) & { cancel(): void };

  constructor(
    private api: Api,
    private neighborCount = 5,
    debounceMs: number = DEBOUNCE_MS,
  ) {
    this.scheduleDecode = debounce((z: number[]) => {
      void this.requestDecode(z);
    }, debounceMs);
  }

  onChange(fn: (v: ExplorerView) => void): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.view);
  }

  /** Decode with sequence tracking; stale responses are dropped. */
  private async requestDecode(z: number[]): Promise<void> {
    const seq = ++this.issuedSeq;
    try {
      const blob = await this.api.decode(z);
      if (seq <= this.appliedSeq) return; // a newer response already landed
      this.appliedSeq = seq;
      this.view.glyph = blob;
      this.view.error = null;
      this.emit();
    } catch (e) {
      this.fail(e);
    }
    try {
      this.view.neighbors = await this.api.neighbors(z, this.neighborCount);
      this.emit();
    } catch {
      // neighbor refresh is best-effort; the glyph already updated
    }
  }

  private fail(e: unknown): void {
    this.view.error =
      e instanceof ApiError ? e.message : "service unreachable";
    this.emit();
  }

  async selectCharacter(ch: string): Promise<void> {
    this.scheduleDecode.cancel();
    try {
      const emb = await this.api.embedding(ch);
      this.view.char = ch;
      this.view.mu = [...emb.mu];
      this.view.sigma = [...emb.sigma];
      this.view.z = [...emb.mu];
      this.view.ssa = null;
      this.view.strip = null;
      this.view.stripDim = null;
      this.view.error = null;
      this.emit();
      await this.requestDecode(this.view.z);
    } catch (e) {
      this.fail(e);
    }
  }

  /** Slider input: immediate state update, debounced decode. */
  dragDimension(dim: number, value: number): void {
    if (dim < 0 || dim >= this.view.z.length) return;
    this.view.z[dim] = value;
    this.emit();
    this.scheduleDecode([...this.view.z]);
  }

  /** Sample (dim, u) client-side; the server does all decoding. */
  async randomizeSsa(
    gamma: number,
    rand: () => number = Math.random,
  ): Promise<void> {
    const d = this.view.z.length;
    if (d === 0 || this.view.char === null) return;
    const dim = Math.min(d - 1, Math.floor(rand() * d));
    const u = (rand() * 2 - 1) * gamma;
    try {
      const before = await this.api.decode([...this.view.z]);
      let after: Blob;
      if (this.atMu()) {
        const preview = await this.api.ssaPreview(this.view.char, dim, u);
        after = base64ToBlob(preview.png, "image/png");
        this.view.neighbors = preview.neighbors;
      } else {
        const z = [...this.view.z];
        z[dim] = (z[dim] as number) + u;
        after = await this.api.decode(z);
      }
      this.view.ssa = { dim, u, before, after };
      this.view.error = null;
      this.emit();
    } catch (e) {
      this.fail(e);
    }
  }

  /** Nine reconstructions at offsets -2..+2 on one dimension of mu. */
  async showTraversal(dim: number): Promise<void> {
    if (dim < 0 || dim >= this.view.mu.length) return;
    const offsets = traversalOffsets();
    try {
      const strip: Blob[] = [];
      for (const off of offsets) {
        const z = [...this.view.mu];
        z[dim] = (this.view.mu[dim] as number) + off;
        strip.push(await this.api.decode(z));
      }
      this.view.strip = strip;
      this.view.stripDim = dim;
      this.view.error = null;
      this.emit();
    } catch (e) {
      this.fail(e);
    }
  }

  private atMu(): boolean {
    return (
      this.view.z.length === this.view.mu.length &&
      this.view.z.every((v, i) => v === this.view.mu[i])
    );
  }
}

export function traversalOffsets(
  steps: number = TRAVERSAL_STEPS,
  range: number = TRAVERSAL_RANGE,
): number[] {
  const out: number[] = [];
  for (let i = 0; i < steps; i++) {
    out.push(-range + (2 * range * i) / (steps - 1));
  }
  return out;
}

export function base64ToBlob(b64: string, type: string): Blob {
  const bin = atob(b64);
  const bytes = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) bytes[i] = bin.charCodeAt(i);
  return new Blob([bytes], { type });
}
