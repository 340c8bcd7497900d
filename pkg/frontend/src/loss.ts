/**
 * Scale-invariant depth loss in log space.
 *
 * With d_i = log(pred_i) - log(gt_i):
 *   L = mean(d^2) - lambda * mean(d)^2
 * Zero at an exact prediction; a uniformly scaled prediction c * gt costs
 * (1 - lambda) * log(c)^2, vanishing entirely at lambda = 1.
 */

import * as tf from "@tensorflow/tfjs";

export const DEFAULT_LAMBDA = 0.5;

export function scaleInvariantLoss(
  pred: tf.Tensor,
  gt: tf.Tensor,
  lambda: number = DEFAULT_LAMBDA,
): tf.Scalar {
  return tf.tidy(() => {
    const d = tf.sub(tf.log(pred), tf.log(gt));
    const meanSq = tf.mean(tf.square(d));
    const sqMean = tf.square(tf.mean(d));
    return tf.sub(meanSq, tf.mul(lambda, sqMean)) as tf.Scalar;
  });
}

export function scaleInvariantLossValue(
  pred: number[],
  gt: number[],
  lambda: number = DEFAULT_LAMBDA,
): number {
  const loss = scaleInvariantLoss(tf.tensor1d(pred), tf.tensor1d(gt), lambda);
  const v = loss.dataSync()[0];
  loss.dispose();
  return v;
}
