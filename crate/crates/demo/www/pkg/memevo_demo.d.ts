/* tslint:disable */
/* eslint-disable */

/**
 * A sequential evolution run advanced a few genomes per call, so the page
 * stays responsive.
 */
export class EvolutionSession {
    free(): void;
    [Symbol.dispose](): void;
    bestDump(): string;
    /**
     * `cells` is a comma-separated list such as `lstm,simple`.
     */
    constructor(cells: string, budget: number, seed: bigint);
    /**
     * Trains up to `n` more genomes; returns the JSON status.
     */
    step(n: number): string;
    /**
     * Tab-separated `(evaluated, best)` rows.
     */
    trajectory(): string;
}

/**
 * A genome the page mutates one operator at a time.
 */
export class GenomeExplorer {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Applies the named operator (`add_node`, `split_edge`, ...). Returns a
     * status message; the genome only changes on success.
     */
    apply(op: string): string;
    dump(): string;
    constructor(n_inputs: number, seed: bigint);
    /**
     * JSON node and edge counts.
     */
    summary(): string;
}

/**
 * JSON `{input, state, params}` for the named cell type.
 */
export function cellResponse(cell: string, steps: number, recurrent_weight: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_evolutionsession_free: (a: number, b: number) => void;
    readonly __wbg_genomeexplorer_free: (a: number, b: number) => void;
    readonly cellResponse: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly evolutionsession_bestDump: (a: number) => [number, number];
    readonly evolutionsession_new: (a: number, b: number, c: number, d: bigint) => [number, number, number];
    readonly evolutionsession_step: (a: number, b: number) => [number, number, number, number];
    readonly evolutionsession_trajectory: (a: number) => [number, number];
    readonly genomeexplorer_apply: (a: number, b: number, c: number) => [number, number, number, number];
    readonly genomeexplorer_dump: (a: number) => [number, number];
    readonly genomeexplorer_new: (a: number, b: bigint) => [number, number, number];
    readonly genomeexplorer_summary: (a: number) => [number, number];
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
