/**
 * Minimal trainable transformer blocks on raw tensor ops.
 *
 * Everything is batch-first [batch, time, width]. Parameters are plain
 * tf.Variable instances collected per module so optimizers and
 * checkpoints can enumerate them; initialization is fully seeded.
 */

import * as tf from "@tensorflow/tfjs";

export class SeedStream {
  private counter: number;
  constructor(seed: number) {
    this.counter = seed >>> 0;
  }
  next(): number {
    this.counter = (this.counter + 0x9e3779b9) >>> 0;
    return this.counter;
  }
}

export interface Module {
  params(): tf.Variable[];
}

export class Dense implements Module {
  readonly w: tf.Variable;
  readonly b: tf.Variable;

  constructor(inDim: number, outDim: number, seeds: SeedStream, name: string) {
    const std = Math.sqrt(2.0 / (inDim + outDim));
    this.w = tf.variable(
      tf.randomNormal([inDim, outDim], 0, std, "float32", seeds.next()),
      true,
      `${name}.w`,
    );
    this.b = tf.variable(tf.zeros([outDim]), true, `${name}.b`);
  }

  apply(x: tf.Tensor): tf.Tensor {
    const flat = x.reshape([-1, this.w.shape[0] as number]);
    const y = tf.add(tf.matMul(flat, this.w), this.b);
    const outShape = x.shape.slice(0, -1).concat([this.w.shape[1] as number]);
    return y.reshape(outShape);
  }

  params(): tf.Variable[] {
    return [this.w, this.b];
  }
}

export class LayerNorm implements Module {
  readonly gamma: tf.Variable;
  readonly beta: tf.Variable;

  constructor(dim: number, name: string) {
    this.gamma = tf.variable(tf.ones([dim]), true, `${name}.gamma`);
    this.beta = tf.variable(tf.zeros([dim]), true, `${name}.beta`);
  }

  apply(x: tf.Tensor): tf.Tensor {
    const mean = tf.mean(x, -1, true);
    const variance = tf.mean(tf.square(tf.sub(x, mean)), -1, true);
    const normed = tf.div(tf.sub(x, mean), tf.sqrt(tf.add(variance, 1e-5)));
    return tf.add(tf.mul(normed, this.gamma), this.beta);
  }

  params(): tf.Variable[] {
    return [this.gamma, this.beta];
  }
}

export class MultiHeadAttention implements Module {
  private readonly heads: number;
  private readonly headDim: number;
  private readonly wq: Dense;
  private readonly wk: Dense;
  private readonly wv: Dense;
  private readonly wo: Dense;

  constructor(dim: number, heads: number, seeds: SeedStream, name: string) {
    if (dim % heads !== 0) throw new Error("width must divide evenly across heads");
    this.heads = heads;
    this.headDim = dim / heads;
    this.wq = new Dense(dim, dim, seeds, `${name}.q`);
    this.wk = new Dense(dim, dim, seeds, `${name}.k`);
    this.wv = new Dense(dim, dim, seeds, `${name}.v`);
    this.wo = new Dense(dim, dim, seeds, `${name}.o`);
  }

  private split(x: tf.Tensor): tf.Tensor {
    const [b, t] = [x.shape[0] as number, x.shape[1] as number];
    return x.reshape([b, t, this.heads, this.headDim]).transpose([0, 2, 1, 3]);
  }

  /**
   * query [B, Tq, D], memory [B, Tk, D]; optional additive mask
   * broadcastable to [B, heads, Tq, Tk] (use -1e9 to forbid).
   */
  apply(query: tf.Tensor, memory: tf.Tensor, mask?: tf.Tensor): tf.Tensor {
    const q = this.split(this.wq.apply(query));
    const k = this.split(this.wk.apply(memory));
    const v = this.split(this.wv.apply(memory));
    let scores = tf.div(tf.matMul(q, k, false, true), Math.sqrt(this.headDim));
    if (mask) scores = tf.add(scores, mask);
    const attn = tf.softmax(scores);
    const mixed = tf.matMul(attn, v);
    const [b, , tq] = [mixed.shape[0] as number, 0, mixed.shape[2] as number];
    const merged = mixed.transpose([0, 2, 1, 3]).reshape([b, tq, this.heads * this.headDim]);
    return this.wo.apply(merged);
  }

  params(): tf.Variable[] {
    return [...this.wq.params(), ...this.wk.params(), ...this.wv.params(), ...this.wo.params()];
  }
}

class FeedForward implements Module {
  private readonly up: Dense;
  private readonly down: Dense;

  constructor(dim: number, hidden: number, seeds: SeedStream, name: string) {
    this.up = new Dense(dim, hidden, seeds, `${name}.up`);
    this.down = new Dense(hidden, dim, seeds, `${name}.down`);
  }

  apply(x: tf.Tensor): tf.Tensor {
    return this.down.apply(tf.relu(this.up.apply(x)));
  }

  params(): tf.Variable[] {
    return [...this.up.params(), ...this.down.params()];
  }
}

export class EncoderBlock implements Module {
  private readonly attn: MultiHeadAttention;
  private readonly ff: FeedForward;
  private readonly norm1: LayerNorm;
  private readonly norm2: LayerNorm;

  constructor(dim: number, heads: number, ffDim: number, seeds: SeedStream, name: string) {
    this.attn = new MultiHeadAttention(dim, heads, seeds, `${name}.attn`);
    this.ff = new FeedForward(dim, ffDim, seeds, `${name}.ff`);
    this.norm1 = new LayerNorm(dim, `${name}.n1`);
    this.norm2 = new LayerNorm(dim, `${name}.n2`);
  }

  apply(x: tf.Tensor, mask?: tf.Tensor): tf.Tensor {
    const h = tf.add(x, this.attn.apply(this.norm1.apply(x), this.norm1.apply(x), mask));
    return tf.add(h, this.ff.apply(this.norm2.apply(h)));
  }

  params(): tf.Variable[] {
    return [...this.attn.params(), ...this.ff.params(), ...this.norm1.params(), ...this.norm2.params()];
  }
}

export class DecoderBlock implements Module {
  private readonly selfAttn: MultiHeadAttention;
  private readonly crossAttn: MultiHeadAttention;
  private readonly ff: FeedForward;
  private readonly norm1: LayerNorm;
  private readonly norm2: LayerNorm;
  private readonly norm3: LayerNorm;

  constructor(dim: number, heads: number, ffDim: number, seeds: SeedStream, name: string) {
    this.selfAttn = new MultiHeadAttention(dim, heads, seeds, `${name}.self`);
    this.crossAttn = new MultiHeadAttention(dim, heads, seeds, `${name}.cross`);
    this.ff = new FeedForward(dim, ffDim, seeds, `${name}.ff`);
    this.norm1 = new LayerNorm(dim, `${name}.n1`);
    this.norm2 = new LayerNorm(dim, `${name}.n2`);
    this.norm3 = new LayerNorm(dim, `${name}.n3`);
  }

  apply(
    x: tf.Tensor,
    memory: tf.Tensor,
    causalMask?: tf.Tensor,
    memoryMask?: tf.Tensor,
  ): tf.Tensor {
    const n1 = this.norm1.apply(x);
    let h = tf.add(x, this.selfAttn.apply(n1, n1, causalMask));
    h = tf.add(h, this.crossAttn.apply(this.norm2.apply(h), memory, memoryMask));
    return tf.add(h, this.ff.apply(this.norm3.apply(h)));
  }

  params(): tf.Variable[] {
    return [
      ...this.selfAttn.params(), ...this.crossAttn.params(), ...this.ff.params(),
      ...this.norm1.params(), ...this.norm2.params(), ...this.norm3.params(),
    ];
  }
}

/** Additive causal mask [1, 1, t, t]: position i may attend to j <= i. */
export function causalMask(t: number): tf.Tensor {
  const buf = new Float32Array(t * t);
  for (let i = 0; i < t; i++) {
    for (let j = i + 1; j < t; j++) buf[i * t + j] = -1e9;
  }
  return tf.tensor(buf, [1, 1, t, t]);
}

/** Sinusoidal position encodings [t, dim]. */
export function positionEncoding(t: number, dim: number): tf.Tensor {
  const buf = new Float32Array(t * dim);
  for (let pos = 0; pos < t; pos++) {
    for (let i = 0; i < dim; i++) {
      const rate = Math.pow(10000, -(2 * Math.floor(i / 2)) / dim);
      buf[pos * dim + i] = i % 2 === 0 ? Math.sin(pos * rate) : Math.cos(pos * rate);
    }
  }
  return tf.tensor(buf, [t, dim]);
}

export function saveVariables(params: tf.Variable[]): Record<string, { shape: number[]; data: number[] }> {
  const out: Record<string, { shape: number[]; data: number[] }> = {};
  params.forEach((p, i) => {
    const key = p.name || `var_${i}`;
    out[key] = { shape: p.shape.slice(), data: Array.from(p.dataSync()) };
  });
  return out;
}

export function loadVariables(
  params: tf.Variable[],
  stored: Record<string, { shape: number[]; data: number[] }>,
): void {
  params.forEach((p, i) => {
    const key = p.name || `var_${i}`;
    const entry = stored[key];
    if (!entry) throw new Error(`checkpoint is missing ${key}`);
    p.assign(tf.tensor(entry.data, entry.shape as number[]));
  });
}
