/* tslint:disable */
/* eslint-disable */

export function alignmentCurve(slice: Float64Array, n: number): Float64Array;

export function edgeMap(slice: Float64Array, n: number): Uint8Array;

/**
 * Returns the combined score curve with the chosen angle appended.
 */
export function nextAngle(slice: Float64Array, n: number, selected: Float64Array, gamma: number, alpha: number): Float64Array;

export function presetSlice(name: string, n: number): Float64Array;

export function segments(slice: Float64Array, n: number): Float64Array;

export function spacingCurve(selected: Float64Array, alpha: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly alignmentCurve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly edgeMap: (a: number, b: number, c: number) => [number, number, number, number];
    readonly nextAngle: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly presetSlice: (a: number, b: number, c: number) => [number, number, number, number];
    readonly segments: (a: number, b: number, c: number) => [number, number, number, number];
    readonly spacingCurve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
