/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_dronedemo_free: (a: number, b: number) => void;
export const compile_objective: (a: number, b: number) => [number, number, number, number];
export const dronedemo_apply: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const dronedemo_height: (a: number) => number;
export const dronedemo_new: (a: bigint, b: number, c: number) => [number, number, number];
export const dronedemo_state: (a: number) => [number, number];
export const dronedemo_step: (a: number) => [number, number, number, number];
export const dronedemo_target_marginal: (a: number) => [number, number];
export const dronedemo_width: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
