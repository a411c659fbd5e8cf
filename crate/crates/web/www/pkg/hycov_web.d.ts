/* tslint:disable */
/* eslint-disable */

/**
 * Mean fixed-grid previous-tick estimate against the grid width for a
 * Poisson pair with unit volatilities and correlation `rho`.
 */
export function epps(theta1: number, theta2: number, intensity: number, rho: number, replications: number, seed: number): string;

/**
 * `G`, `F`, `H` of one simulated scheme on `[0, 1]`, with fitted slopes.
 */
export function qcv(kind: string, theta1: number, theta2: number, intensity: number, seed: number): string;

/**
 * Joint grid of two observation schemes on `[0, horizon]`.
 */
export function sync_grid(times_x: Float64Array, times_y: Float64Array, horizon: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly epps: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly qcv: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly sync_grid: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
