/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_onlinetrace_free: (a: number, b: number) => void;
export const __wbg_perioddemo_free: (a: number, b: number) => void;
export const __wbg_skymatch_free: (a: number, b: number) => void;
export const crossmatch_sky: (a: bigint, b: number, c: number, d: number, e: number) => [number, number, number];
export const online_detection: (a: bigint, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
export const onlinetrace_alert_frames: (a: number) => [number, number];
export const onlinetrace_alert_scores: (a: number) => [number, number];
export const onlinetrace_injected_off: (a: number) => number;
export const onlinetrace_injected_on: (a: number) => number;
export const onlinetrace_mags: (a: number) => [number, number];
export const period_search: (a: bigint, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const perioddemo_best_period: (a: number) => number;
export const perioddemo_frequencies: (a: number) => [number, number];
export const perioddemo_mags: (a: number) => [number, number];
export const perioddemo_power: (a: number) => [number, number];
export const perioddemo_times: (a: number) => [number, number];
export const skymatch_ambiguous: (a: number) => number;
export const skymatch_frame_dec: (a: number) => [number, number];
export const skymatch_frame_matched: (a: number) => [number, number];
export const skymatch_frame_ra: (a: number) => [number, number];
export const skymatch_matched: (a: number) => number;
export const skymatch_template_dec: (a: number) => [number, number];
export const skymatch_template_ra: (a: number) => [number, number];
export const skymatch_unmatched: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
