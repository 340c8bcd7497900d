/**
 * Depth initialization network.
 *
 * The drawing is rasterized to a 256x256 bitmap, pushed through a small
 * strided convolution stack to a 16x16 feature grid, flattened into 256
 * visual tokens, and a transformer decoder maps one token per vertex
 * (embedded from its normalized image position) to a depth. Outputs are
 * exponentiated around the nominal camera distance, so an untrained
 * network already predicts plausible positive depths.
 */

import * as tf from "@tensorflow/tfjs";

import { rasterize, vertexPixelCoords, RASTER_SIZE } from "./geometry.js";
import type { DrawingDoc } from "./interchange.js";
import {
  DecoderBlock,
  Dense,
  LayerNorm,
  loadVariables,
  positionEncoding,
  saveVariables,
  SeedStream,
  type Module,
} from "./transformer.js";

export interface DepthConfig {
  dModel: number;
  heads: number;
  ffDim: number;
  layers: number;
  cnnChannels: number[];
  seed: number;
}

export const DEFAULT_DEPTH_CONFIG: DepthConfig = {
  dModel: 512,
  heads: 8,
  ffDim: 1024,
  layers: 1,
  cnnChannels: [8, 16, 32, 64],
  seed: 11,
};

export class DepthModel implements Module {
  readonly config: DepthConfig;
  private readonly filters: tf.Variable[] = [];
  private readonly biases: tf.Variable[] = [];
  private readonly visualProj: Dense;
  private readonly vertexMlp1: Dense;
  private readonly vertexMlp2: Dense;
  private readonly decoder: DecoderBlock[];
  private readonly outNorm: LayerNorm;
  private readonly head: Dense;
  private readonly logBias: tf.Variable;

  constructor(config: DepthConfig = DEFAULT_DEPTH_CONFIG) {
    this.config = config;
    const seeds = new SeedStream(config.seed);
    let inCh = 1;
    config.cnnChannels.forEach((outCh, i) => {
      const std = Math.sqrt(2.0 / (9 * inCh));
      this.filters.push(tf.variable(
        tf.randomNormal([3, 3, inCh, outCh], 0, std, "float32", seeds.next()),
        true, `depth.conv${i}.w`,
      ));
      this.biases.push(tf.variable(tf.zeros([outCh]), true, `depth.conv${i}.b`));
      inCh = outCh;
    });
    const d = config.dModel;
    this.visualProj = new Dense(inCh, d, seeds, "depth.visproj");
    this.vertexMlp1 = new Dense(2, d, seeds, "depth.vmlp1");
    this.vertexMlp2 = new Dense(d, d, seeds, "depth.vmlp2");
    this.decoder = [];
    for (let l = 0; l < config.layers; l++) {
      this.decoder.push(new DecoderBlock(d, config.heads, config.ffDim, seeds, `depth.dec${l}`));
    }
    this.outNorm = new LayerNorm(d, "depth.outnorm");
    this.head = new Dense(d, 1, seeds, "depth.head");
    this.logBias = tf.variable(tf.scalar(0.0), true, "depth.logbias");
  }

  params(): tf.Variable[] {
    const out: tf.Variable[] = [...this.filters, ...this.biases];
    out.push(
      ...this.visualProj.params(), ...this.vertexMlp1.params(), ...this.vertexMlp2.params(),
      ...this.outNorm.params(), ...this.head.params(), this.logBias,
    );
    for (const block of this.decoder) out.push(...block.params());
    return out;
  }

  /** 256 visual tokens [1, 256, d] from a raster [size, size]. */
  visualTokens(image: Float32Array): tf.Tensor {
    return tf.tidy(() => {
      let x = tf.tensor(image, [1, RASTER_SIZE, RASTER_SIZE, 1]);
      this.filters.forEach((filt, i) => {
        x = tf.relu(tf.add(tf.conv2d(x as tf.Tensor4D, filt as unknown as tf.Tensor4D, 2, "same"), this.biases[i]));
      });
      // four stride-2 convolutions land on 16x16; pool any remainder if
      // the channel stack is reconfigured shorter
      while ((x.shape[1] as number) > 16) {
        x = tf.maxPool(x as tf.Tensor4D, 2, 2, "same");
      }
      const grid = x.reshape([1, 16 * 16, this.config.cnnChannels.at(-1)!]);
      return this.visualProj.apply(grid);
    });
  }

  /** Depth predictions for every vertex of one drawing: [m]. */
  forward(doc: DrawingDoc): tf.Tensor {
    const image = rasterize(doc);
    const coords = vertexPixelCoords(doc);
    return tf.tidy(() => {
      const d = this.config.dModel;
      const memory = this.visualTokens(image);
      const m = coords.length;
      const coordT = tf.tensor(coords.flat(), [m, 2]);
      let tokens = this.vertexMlp2.apply(tf.relu(this.vertexMlp1.apply(coordT)));
      tokens = tf.add(tokens, positionEncoding(m, d)).reshape([1, m, d]);
      let h = tokens;
      for (const block of this.decoder) h = block.apply(h, memory);
      const logDepth = tf.add(
        this.head.apply(this.outNorm.apply(h)).reshape([m]),
        tf.add(this.logBias, Math.log(doc.camera.center_distance)),
      );
      return tf.exp(logDepth);
    });
  }

  predict(doc: DrawingDoc): number[] {
    const depths = this.forward(doc);
    const out = Array.from(depths.dataSync());
    depths.dispose();
    return out;
  }

  saveWeights(): Record<string, { shape: number[]; data: number[] }> {
    return saveVariables(this.params());
  }

  loadWeights(stored: Record<string, { shape: number[]; data: number[] }>): void {
    loadVariables(this.params(), stored);
  }
}
