/** Typed client for the explorer HTTP API. All math happens server-side;
 * this module only moves JSON and PNG blobs. */

export interface Meta {
  latent_dim: number;
  charset_size: number;
  active_dims: number[];
  classifier_loaded: boolean;
  z_limit: number;
}

export interface Embedding {
  char: string;
  mu: number[];
  sigma: number[];
}

export interface Neighbor {
  char: string;
  codepoint: number;
  distance: number;
}

export interface SsaPreview {
  png: string; // base64
  z: number[];
  neighbors: Neighbor[];
}

export interface CharEntry {
  codepoint: number;
  char: string;
  mu: number[];
  sigma: number[];
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export interface Api {
  meta(): Promise<Meta>;
  chars(query: string, limit?: number): Promise<CharEntry[]>;
  embedding(ch: string): Promise<Embedding>;
  decode(z: number[]): Promise<Blob>;
  neighbors(z: number[], k: number): Promise<Neighbor[]>;
  ssaPreview(ch: string, dim: number, u: number): Promise<SsaPreview>;
}

async function jsonOrThrow<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = (await res.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body; keep statusText
    }
    throw new ApiError(res.status, detail);
  }
  return (await res.json()) as T;
}

export class HttpApi implements Api {
  constructor(private base: string = "") {}

  meta(): Promise<Meta> {
    return fetch(`${this.base}/api/meta`).then((r) => jsonOrThrow<Meta>(r));
  }

  async chars(query: string, limit = 50): Promise<CharEntry[]> {
    const params = new URLSearchParams({ query, limit: String(limit) });
    const page = await fetch(`${this.base}/api/chars?${params}`).then((r) =>
      jsonOrThrow<{ entries: CharEntry[] }>(r),
    );
    return page.entries;
  }

  embedding(ch: string): Promise<Embedding> {
    return fetch(`${this.base}/api/embedding/${encodeURIComponent(ch)}`).then(
      (r) => jsonOrThrow<Embedding>(r),
    );
  }

  async decode(z: number[]): Promise<Blob> {
    const res = await fetch(`${this.base}/api/decode`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ z }),
    });
    if (!res.ok) throw new ApiError(res.status, await res.text());
    return res.blob();
  }

  async neighbors(z: number[], k: number): Promise<Neighbor[]> {
    const res = await fetch(`${this.base}/api/neighbors`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ z, k }),
    });
    return (await jsonOrThrow<{ neighbors: Neighbor[] }>(res)).neighbors;
  }

  async ssaPreview(ch: string, dim: number, u: number): Promise<SsaPreview> {
    const res = await fetch(`${this.base}/api/ssa_preview`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ char: ch, dim, u }),
    });
    return jsonOrThrow<SsaPreview>(res);
  }
}
