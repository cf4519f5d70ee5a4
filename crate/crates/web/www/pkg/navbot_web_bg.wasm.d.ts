/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_sim_free: (a: number, b: number) => void;
export const builtin_maps: () => [number, number];
export const render_view: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const sim_depth_profile: (a: number) => [number, number, number, number];
export const sim_frame: (a: number) => [number, number];
export const sim_layout: (a: number) => [number, number];
export const sim_new: (a: number, b: number) => [number, number, number];
export const sim_place: (a: number, b: number, c: number, d: number) => [number, number];
export const sim_reset: (a: number) => [number, number];
export const sim_status: (a: number) => [number, number];
export const sim_step: (a: number, b: number, c: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
