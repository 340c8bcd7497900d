/**
 * Training loops for the pointer and depth models.
 *
 * Both use Adam at the 5e-4 rate. Pointer training teacher-forces the
 * relation sequences of every query edge of one drawing per step; depth
 * training averages the scale-invariant loss over a small drawing batch.
 * Seeded end to end: identical configurations produce identical loss
 * traces. Non-finite losses abort and keep the last good weights.
 */

import * as tf from "@tensorflow/tfjs";

import { DepthModel } from "./depth.js";
import type { ConstraintKind, DrawingDoc } from "./interchange.js";
import { groundTruthRelations } from "./interchange.js";
import { scaleInvariantLoss, DEFAULT_LAMBDA } from "./loss.js";
import { PointerModel, sequenceRows } from "./pointer.js";
import { SeedStream } from "./transformer.js";

export const ADAM_LEARNING_RATE = 5e-4;

export interface TrainLog {
  steps: number;
  losses: number[];
  aborted: boolean;
}

export function trainPointer(
  model: PointerModel,
  corpus: DrawingDoc[],
  kind: ConstraintKind,
  steps: number,
  seed = 0,
  onStep?: (step: number, loss: number) => void,
): TrainLog {
  const optimizer = tf.train.adam(ADAM_LEARNING_RATE);
  const seeds = new SeedStream(seed);
  const losses: number[] = [];
  const relations = corpus.map((doc) => groundTruthRelations(doc, kind));
  let aborted = false;
  let backup = model.saveWeights();
  for (let step = 0; step < steps; step++) {
    const pick = seeds.next() % corpus.length;
    const doc = corpus[pick];
    const rel = relations[pick];
    const n = doc.edges.length;
    const eosId = n;
    const maxLen = Math.max(...[...rel.values()].map((r) => r.length)) + 2;
    const inputs: number[][] = [];
    const targets: number[][] = [];
    const mask: number[][] = [];
    for (let q = 0; q < n; q++) {
      const rows = sequenceRows(q, rel.get(q) ?? [], eosId, maxLen);
      inputs.push(rows.inputs);
      targets.push(rows.targets);
      mask.push(rows.mask);
    }
    const lossT = optimizer.minimize(
      () => {
        const contextual = model.encode(doc);
        return model.sequenceLoss(contextual, inputs, targets, mask);
      },
      true,
      model.params(),
    ) as tf.Scalar;
    const loss = lossT.dataSync()[0];
    lossT.dispose();
    if (!Number.isFinite(loss)) {
      model.loadWeights(backup);
      aborted = true;
      break;
    }
    losses.push(loss);
    if (step % 25 === 0) backup = model.saveWeights();
    onStep?.(step, loss);
  }
  optimizer.dispose();
  return { steps: losses.length, losses, aborted };
}

export function trainDepth(
  model: DepthModel,
  corpus: DrawingDoc[],
  steps: number,
  seed = 0,
  batchSize = 2,
  lambda = DEFAULT_LAMBDA,
  onStep?: (step: number, loss: number) => void,
): TrainLog {
  const optimizer = tf.train.adam(ADAM_LEARNING_RATE);
  const seeds = new SeedStream(seed);
  const losses: number[] = [];
  let aborted = false;
  let backup = model.saveWeights();
  const withGt = corpus.filter((doc) => doc.gt_depths);
  if (withGt.length === 0) throw new Error("depth training needs gt_depths");
  for (let step = 0; step < steps; step++) {
    const batch: DrawingDoc[] = [];
    for (let b = 0; b < batchSize; b++) batch.push(withGt[seeds.next() % withGt.length]);
    const lossT = optimizer.minimize(
      () => {
        let total: tf.Scalar = tf.scalar(0);
        for (const doc of batch) {
          const pred = model.forward(doc);
          const gt = tf.tensor1d(doc.gt_depths!);
          total = tf.add(total, scaleInvariantLoss(pred, gt, lambda)) as tf.Scalar;
        }
        return tf.div(total, batch.length) as tf.Scalar;
      },
      true,
      model.params(),
    ) as tf.Scalar;
    const loss = lossT.dataSync()[0];
    lossT.dispose();
    if (!Number.isFinite(loss)) {
      model.loadWeights(backup);
      aborted = true;
      break;
    }
    losses.push(loss);
    if (step % 25 === 0) backup = model.saveWeights();
    onStep?.(step, loss);
  }
  optimizer.dispose();
  return { steps: losses.length, losses, aborted };
}
