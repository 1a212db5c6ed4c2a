/* tslint:disable */
/* eslint-disable */

export function noiseBudget(amplitude_nv: number, exponent: number, t_integration: number, pulse_width_ms: number, f_cutoff: number): string;

export function photonHistogram(mean_carriers: number, n_pulses: number, amplitude_nv: number, seed: number): string;

export function simulateStaircase(mean_photons: number, n_pulses: number, amplitude_nv: number, telegraph: boolean, min_step: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly noiseBudget: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly photonHistogram: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly simulateStaircase: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
