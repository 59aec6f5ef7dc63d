/* tslint:disable */
/* eslint-disable */

export function fourLevelSpectrum(g_electron: number, g_hole: number, field_mt: number, homogeneous_mhz: number, tau_us: number, inhom_fwhm_mhz: number, pump: number, probe: number, grid: Float64Array): Float64Array;

export function grid(start: number, stop: number, points: number): Float64Array;

export function planTable(tau_us: number, eta_zpl: number, linewidths_mhz: Float64Array, target: number): Float64Array;

export function threeLevelSpectrum(n1: number, n2: number, n3: number, splitting_mhz: number, homogeneous_mhz: number, tau_us: number, inhom_fwhm_mhz: number, pump: number, probe: number, grid: Float64Array): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly fourLevelSpectrum: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number) => [number, number, number, number];
    readonly grid: (a: number, b: number, c: number) => [number, number];
    readonly planTable: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly threeLevelSpectrum: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number) => [number, number, number, number];
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
