/* tslint:disable */
/* eslint-disable */

export class DroneDemo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Manual belief update with a chosen action and observation. The hidden
     * drone follows the action; the hidden target is resampled from the posterior.
     */
    apply(action: string, observation: string): string;
    height(): number;
    constructor(seed: bigint, sims: number, depth: number);
    /**
     * JSON snapshot: drone and true target cells, automaton state, status.
     */
    state(): string;
    /**
     * Plans one move with MCTS and executes it on the hidden state.
     */
    step(): string;
    /**
     * Target-location marginal of the current belief, row-major by cell.
     */
    target_marginal(): Float64Array;
    width(): number;
}

/**
 * Compiles `formula` over the drone atoms (`goal`, `measured`) and returns
 * the automaton as JSON with an extra `dot` field.
 */
export function compile_objective(formula: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_dronedemo_free: (a: number, b: number) => void;
    readonly compile_objective: (a: number, b: number) => [number, number, number, number];
    readonly dronedemo_apply: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly dronedemo_height: (a: number) => number;
    readonly dronedemo_new: (a: bigint, b: number, c: number) => [number, number, number];
    readonly dronedemo_state: (a: number) => [number, number];
    readonly dronedemo_step: (a: number) => [number, number, number, number];
    readonly dronedemo_target_marginal: (a: number) => [number, number];
    readonly dronedemo_width: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
