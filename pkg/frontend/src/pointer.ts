/**
 * Pointer network for pairwise constraint prediction.
 *
 * Each edge becomes one input token: a fixed count of sample points,
 * lexicographically ordered, flattened through a two-layer MLP into a
 * 512-wide value embedding, plus a sinusoidal position embedding; a
 * learned end-of-sequence token closes the input set. The decoder emits
 * a pointer distribution over input slots at every step by dot product
 * with the encoder's contextual embeddings.
 *
 * Output sequences start with the query edge itself (that echo is how
 * the query is conditioned), then the related edges in index order,
 * then the end token.
 */

import * as tf from "@tensorflow/tfjs";

import { sampleEdgePoints, EDGE_POINT_COUNT } from "./geometry.js";
import type { DrawingDoc } from "./interchange.js";
import {
  causalMask,
  DecoderBlock,
  Dense,
  EncoderBlock,
  LayerNorm,
  loadVariables,
  positionEncoding,
  saveVariables,
  SeedStream,
  type Module,
} from "./transformer.js";

export interface PointerConfig {
  dModel: number;
  heads: number;
  ffDim: number;
  layers: number;
  seed: number;
}

export const DEFAULT_POINTER_CONFIG: PointerConfig = {
  dModel: 512,
  heads: 8,
  ffDim: 1024,
  layers: 2,
  seed: 7,
};

export class PointerModel implements Module {
  readonly config: PointerConfig;
  private readonly mlp1: Dense;
  private readonly mlp2: Dense;
  private readonly eosToken: tf.Variable;
  private readonly encoder: EncoderBlock[];
  private readonly decoder: DecoderBlock[];
  private readonly encNorm: LayerNorm;
  private readonly decNorm: LayerNorm;

  constructor(config: PointerConfig = DEFAULT_POINTER_CONFIG) {
    this.config = config;
    const seeds = new SeedStream(config.seed);
    const d = config.dModel;
    this.mlp1 = new Dense(2 * EDGE_POINT_COUNT, d, seeds, "ptr.mlp1");
    this.mlp2 = new Dense(d, d, seeds, "ptr.mlp2");
    this.eosToken = tf.variable(
      tf.randomNormal([1, d], 0, 0.02, "float32", seeds.next()), true, "ptr.eos",
    );
    this.encoder = [];
    this.decoder = [];
    for (let l = 0; l < config.layers; l++) {
      this.encoder.push(new EncoderBlock(d, config.heads, config.ffDim, seeds, `ptr.enc${l}`));
      this.decoder.push(new DecoderBlock(d, config.heads, config.ffDim, seeds, `ptr.dec${l}`));
    }
    this.encNorm = new LayerNorm(d, "ptr.encnorm");
    this.decNorm = new LayerNorm(d, "ptr.decnorm");
  }

  params(): tf.Variable[] {
    const out: tf.Variable[] = [
      ...this.mlp1.params(), ...this.mlp2.params(), this.eosToken,
      ...this.encNorm.params(), ...this.decNorm.params(),
    ];
    for (const block of [...this.encoder, ...this.decoder]) out.push(...block.params());
    return out;
  }

  /** Value embeddings for the edges of one drawing: [n, d]. */
  edgeValueEmbeddings(doc: DrawingDoc): tf.Tensor {
    const feats: number[] = [];
    for (const edge of doc.edges) {
      for (const [x, y] of sampleEdgePoints(doc, edge)) feats.push(x, y);
    }
    const x = tf.tensor(feats, [doc.edges.length, 2 * EDGE_POINT_COUNT]);
    return this.mlp2.apply(tf.relu(this.mlp1.apply(x)));
  }

  /** Contextual embeddings over edges + the end slot: [n + 1, d]. */
  encode(doc: DrawingDoc): tf.Tensor {
    return tf.tidy(() => {
      const values = this.edgeValueEmbeddings(doc);
      const withEos = tf.concat([values, this.eosToken], 0);
      const n = withEos.shape[0] as number;
      let h = tf
        .add(withEos, positionEncoding(n, this.config.dModel))
        .reshape([1, n, this.config.dModel]);
      for (const block of this.encoder) h = block.apply(h);
      return this.encNorm.apply(h).reshape([n, this.config.dModel]);
    });
  }

  /**
   * Pointer logits for a batch of teacher-forced sequences.
   * contextual: [n+1, d]; decoderInputs: [batch, steps] token ids into the
   * input slots; returns [batch, steps, n+1].
   */
  pointerLogits(contextual: tf.Tensor, decoderInputs: number[][]): tf.Tensor {
    const batch = decoderInputs.length;
    const steps = decoderInputs[0].length;
    const d = this.config.dModel;
    return tf.tidy(() => {
      const ids = tf.tensor(decoderInputs.flat(), [batch, steps], "int32");
      const tokens = tf.gather(contextual, ids.reshape([batch * steps])).reshape([batch, steps, d]);
      let h = tf.add(tokens, positionEncoding(steps, d));
      const mask = causalMask(steps);
      const memory = tf.tile(contextual.reshape([1, -1, d]), [batch, 1, 1]);
      for (const block of this.decoder) h = block.apply(h, memory, mask);
      const u = this.decNorm.apply(h);
      return tf.matMul(u, memory, false, true);
    });
  }

  /**
   * Mean negative log likelihood of targets, padding ignored.
   * targets/mask: [batch, steps]; mask 1 for real steps.
   */
  sequenceLoss(
    contextual: tf.Tensor,
    decoderInputs: number[][],
    targets: number[][],
    mask: number[][],
  ): tf.Scalar {
    return tf.tidy(() => {
      const logits = this.pointerLogits(contextual, decoderInputs);
      const logProbs = tf.logSoftmax(logits);
      const batch = targets.length;
      const steps = targets[0].length;
      const ids = tf.tensor(targets.flat(), [batch, steps], "int32");
      const oneHot = tf.oneHot(ids.reshape([batch * steps]), logits.shape[2] as number)
        .reshape([batch, steps, logits.shape[2] as number]);
      const picked = tf.sum(tf.mul(logProbs, oneHot), -1);
      const m = tf.tensor(mask.flat(), [batch, steps]);
      const total = tf.sum(tf.mul(picked, m));
      return tf.neg(tf.div(total, tf.sum(m))) as tf.Scalar;
    });
  }

  /** Greedy per-step distributions and choices for one query edge. */
  decode(doc: DrawingDoc, query: number, maxSteps?: number): { tokens: number[]; truncated: boolean } {
    const n = doc.edges.length;
    const eosId = n;
    const limit = maxSteps ?? n;
    const contextual = this.encode(doc);
    // the first emitted token is the query by contract; decoding continues
    // from the conditioned prefix
    const emitted: number[] = [query];
    let truncated = false;
    for (let step = 1; step < limit; step++) {
      const inputs = [[query, ...emitted.slice(0, step)]];
      const logits = this.pointerLogits(contextual, inputs);
      const last = logits.slice([0, step, 0], [1, 1, n + 1]).reshape([n + 1]);
      const pick = (tf.argMax(last).dataSync() as Int32Array)[0];
      last.dispose();
      if (pick === eosId) {
        contextual.dispose();
        return { tokens: emitted, truncated: false };
      }
      emitted.push(pick);
    }
    truncated = emitted.length >= limit;
    contextual.dispose();
    return { tokens: emitted, truncated };
  }

  /** Per-step probability rows for one teacher-forced sequence. */
  stepDistributions(doc: DrawingDoc, decoderInputs: number[]): number[][] {
    const contextual = this.encode(doc);
    const logits = this.pointerLogits(contextual, [decoderInputs]);
    const probs = tf.softmax(logits).reshape([decoderInputs.length, -1]);
    const rows = probs.arraySync() as number[][];
    contextual.dispose();
    logits.dispose();
    probs.dispose();
    return rows;
  }

  saveWeights(): Record<string, { shape: number[]; data: number[] }> {
    return saveVariables(this.params());
  }

  loadWeights(stored: Record<string, { shape: number[]; data: number[] }>): void {
    loadVariables(this.params(), stored);
  }
}

/** Teacher-forcing rows for one query: inputs, targets, mask. */
export function sequenceRows(
  query: number,
  related: number[],
  eosId: number,
  steps: number,
): { inputs: number[]; targets: number[]; mask: number[] } {
  const target = [query, ...related, eosId];
  const inputs = [query, ...target.slice(0, -1)];
  const mask = target.map(() => 1);
  while (target.length < steps) {
    target.push(eosId);
    inputs.push(eosId);
    mask.push(0);
  }
  return { inputs: inputs.slice(0, steps), targets: target.slice(0, steps), mask: mask.slice(0, steps) };
}

/** Run the model over every query edge of a drawing. */
export function predictRelations(
  model: PointerModel,
  doc: DrawingDoc,
): Map<number, number[]> {
  const out = new Map<number, number[]>();
  for (let q = 0; q < doc.edges.length; q++) {
    const { tokens, truncated } = model.decode(doc, q);
    if (truncated) {
      console.warn(`decode for query ${q} exceeded the step limit; truncated`);
    }
    out.set(q, tokens.slice(1));
  }
  return out;
}
