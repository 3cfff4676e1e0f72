/* tslint:disable */
/* eslint-disable */

/**
 * Positive-rate estimation error of client-side randomized response against
 * LDP-ICL.
 */
export function estimation_comparison(epsilons: Float64Array, n: number, r: number, seeds: number, seed: bigint): string;

/**
 * Randomized response on `trials` copies of label 0 over `m` classes.
 */
export function krr_histogram(m: number, epsilon: number, trials: number, seed: bigint): string;

/**
 * Mock-backend accuracy over the budgets plus the ICL, ZSL and FL-ICL baselines.
 */
export function tradeoff_curve(epsilons: Float64Array, n: number, runs: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly estimation_comparison: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
    readonly krr_histogram: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly tradeoff_curve: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
