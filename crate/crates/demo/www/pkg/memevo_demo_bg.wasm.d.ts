/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_evolutionsession_free: (a: number, b: number) => void;
export const __wbg_genomeexplorer_free: (a: number, b: number) => void;
export const cellResponse: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
export const evolutionsession_bestDump: (a: number) => [number, number];
export const evolutionsession_new: (a: number, b: number, c: number, d: bigint) => [number, number, number];
export const evolutionsession_step: (a: number, b: number) => [number, number, number, number];
export const evolutionsession_trajectory: (a: number) => [number, number];
export const genomeexplorer_apply: (a: number, b: number, c: number) => [number, number, number, number];
export const genomeexplorer_dump: (a: number) => [number, number];
export const genomeexplorer_new: (a: number, b: bigint) => [number, number, number];
export const genomeexplorer_summary: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
