/* tslint:disable */
/* eslint-disable */

/**
 * Magnitudes of one star through a night, with the frames that alerted.
 */
export class OnlineTrace {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly alert_frames: Uint32Array;
    readonly alert_scores: Float64Array;
    readonly injected_off: number;
    readonly injected_on: number;
    readonly mags: Float64Array;
}

/**
 * Irregularly sampled sinusoid and its periodogram.
 */
export class PeriodDemo {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly best_period: number;
    readonly frequencies: Float64Array;
    readonly mags: Float64Array;
    readonly power: Float64Array;
    readonly times: Float64Array;
}

/**
 * One frame matched against its template over a 1°×1° patch.
 */
export class SkyMatch {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly ambiguous: number;
    readonly frame_dec: Float64Array;
    readonly frame_matched: Uint8Array;
    readonly frame_ra: Float64Array;
    readonly matched: number;
    readonly template_dec: Float64Array;
    readonly template_ra: Float64Array;
    readonly unmatched: number;
}

export function crossmatch_sky(seed: bigint, stars: number, radius_arcsec: number, jitter_arcsec: number, new_sources: number): SkyMatch;

/**
 * Simulates `frames` exposures of a single star and brightens it by
 * `delta_mag` (negative is brighter) for `duration` frames from `onset`.
 */
export function online_detection(seed: bigint, frames: number, onset: number, duration: number, delta_mag: number, k: number, window: number): OnlineTrace;

/**
 * `points` samples on the 15 s cadence with `dropout` of frames missing.
 */
export function period_search(seed: bigint, period_s: number, amplitude: number, noise: number, points: number, dropout: number): PeriodDemo;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_onlinetrace_free: (a: number, b: number) => void;
    readonly __wbg_perioddemo_free: (a: number, b: number) => void;
    readonly __wbg_skymatch_free: (a: number, b: number) => void;
    readonly crossmatch_sky: (a: bigint, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly online_detection: (a: bigint, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly onlinetrace_alert_frames: (a: number) => [number, number];
    readonly onlinetrace_alert_scores: (a: number) => [number, number];
    readonly onlinetrace_injected_off: (a: number) => number;
    readonly onlinetrace_injected_on: (a: number) => number;
    readonly onlinetrace_mags: (a: number) => [number, number];
    readonly period_search: (a: bigint, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly perioddemo_best_period: (a: number) => number;
    readonly perioddemo_frequencies: (a: number) => [number, number];
    readonly perioddemo_mags: (a: number) => [number, number];
    readonly perioddemo_power: (a: number) => [number, number];
    readonly perioddemo_times: (a: number) => [number, number];
    readonly skymatch_ambiguous: (a: number) => number;
    readonly skymatch_frame_dec: (a: number) => [number, number];
    readonly skymatch_frame_matched: (a: number) => [number, number];
    readonly skymatch_frame_ra: (a: number) => [number, number];
    readonly skymatch_matched: (a: number) => number;
    readonly skymatch_template_dec: (a: number) => [number, number];
    readonly skymatch_template_ra: (a: number) => [number, number];
    readonly skymatch_unmatched: (a: number) => number;
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
