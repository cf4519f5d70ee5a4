/* tslint:disable */
/* eslint-disable */

/**
 * A robot driven by hand in one maze.
 */
export class Sim {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Perpendicular wall distance of every image column, left to right.
     */
    depth_profile(): Float64Array;
    frame(): Uint8Array;
    /**
     * Grid cells (`-1` free, else the wall color id), wall colors and the goal point as JSON.
     */
    layout(): string;
    constructor(map: string);
    /**
     * Starts a new episode at the given pose.
     */
    place(x: number, y: number, heading: number): void;
    reset(): void;
    /**
     * Pose, goal polar coordinates, reward and outcome as JSON.
     */
    status(): string;
    /**
     * Applies one control step; `v` in m/s, `w` in rad/s.
     */
    step(v: number, w: number): void;
}

/**
 * Names of the builtin maps.
 */
export function builtin_maps(): string[];

/**
 * First-person view of `map` from an arbitrary pose, as 64x48 RGBA.
 */
export function render_view(map: string, x: number, y: number, heading: number): Uint8Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_sim_free: (a: number, b: number) => void;
    readonly builtin_maps: () => [number, number];
    readonly render_view: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly sim_depth_profile: (a: number) => [number, number, number, number];
    readonly sim_frame: (a: number) => [number, number];
    readonly sim_layout: (a: number) => [number, number];
    readonly sim_new: (a: number, b: number) => [number, number, number];
    readonly sim_place: (a: number, b: number, c: number, d: number) => [number, number];
    readonly sim_reset: (a: number) => [number, number];
    readonly sim_status: (a: number) => [number, number];
    readonly sim_step: (a: number, b: number, c: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_drop_slice: (a: number, b: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
