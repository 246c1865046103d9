/* SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the CSR cache-compression library. Handles are opaque;
 * every function returns a status code, and csr_last_error() describes the
 * most recent failure on the calling thread. Configuration goes in as JSON
 * text, reports come back as JSON (or CSV) strings that the caller releases
 * with csr_string_free().
 */

#ifndef CSR_CSR_H
#define CSR_CSR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CSR_API __declspec(dllexport)
#else
#define CSR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum csr_status {
    CSR_OK = 0,
    CSR_ERR_INVALID_ARGUMENT = 1,
    CSR_ERR_IO = 2,
    CSR_ERR_BAD_MAGIC = 3,
    CSR_ERR_UNSUPPORTED_VERSION = 4,
    CSR_ERR_TRUNCATED = 5,
    CSR_ERR_FORMAT = 6,
    CSR_ERR_DUPLICATE_BLOCK = 7,
    CSR_ERR_INDEX_OUT_OF_RANGE = 8,
    CSR_ERR_DIMENSION_MISMATCH = 9,
    CSR_ERR_NON_FINITE = 10,
    CSR_ERR_DEGENERATE_DATA = 11,
    CSR_ERR_MISSING_BLOCK = 12,
    CSR_ERR_INDEX_SPACE_OVERFLOW = 13,
    CSR_ERR_SCHEMA_MISMATCH = 14,
    CSR_ERR_CONFIG = 15,
    CSR_ERR_INTERNAL = 16
} csr_status;

typedef struct csr_capture csr_capture;
typedef struct csr_merge_plan csr_merge_plan;
typedef struct csr_dict_store csr_dict_store;
typedef struct csr_cache csr_cache;

/* Library version as "major.minor.patch". Static storage, do not free. */
CSR_API const char* csr_version(void);

/* Message for the last failing call on this thread. Static per-thread
 * storage, valid until the next API call on the same thread. */
CSR_API const char* csr_last_error(void);

/* Releases any string returned through a char** out parameter. */
CSR_API void csr_string_free(char* s);

/* Caps internal parallelism. n <= 0 restores the hardware default. */
CSR_API void csr_set_threads(int n);

/* Storage-equivalent quantization bits per channel: 32 * s * s_n / head_dim.
 * Returns a negative value on invalid input. */
CSR_API double csr_equivalent_bits(int head_dim, int s, int s_n);

/* ---- captures (CSRC files) ---- */

/* spec_json: synthetic data spec, e.g.
 * {"num_layers":4,"num_heads":2,"head_dim":16,"tokens_per_layer":256,
 *  "seed":7,"generator":{"type":"planted_dictionary","num_atoms":16,
 *  "sparsity":2,"noise_sigma":0.01},"kind":"key"} */
CSR_API csr_status csr_capture_synth(const char* spec_json, csr_capture** out);
CSR_API csr_status csr_capture_read(const char* path, csr_capture** out);
CSR_API csr_status csr_capture_write(const csr_capture* cap, const char* path);
/* Header fields plus per-block token counts. */
CSR_API csr_status csr_capture_info(const csr_capture* cap, char** out_json);
CSR_API void csr_capture_free(csr_capture* cap);

/* ---- layer merge plans ---- */

/* options_json (all optional):
 * {"delta1":0.20,"delta2":1.0,"head":"pooled"|"mean","sample_cap":8192,
 *  "seed":0} */
CSR_API csr_status csr_merge_plan_build(const csr_capture* cap, const char* options_json,
                                        csr_merge_plan** out);
CSR_API csr_status csr_merge_plan_to_json(const csr_merge_plan* plan, char** out_json);
CSR_API csr_status csr_merge_plan_parse(const char* json_text, csr_merge_plan** out);
/* Re-checks the plan's structure and both divergence constraints against the
 * capture. options_json as for csr_merge_plan_build. */
CSR_API csr_status csr_merge_plan_validate(const csr_merge_plan* plan, const csr_capture* cap,
                                           const char* options_json);
CSR_API void csr_merge_plan_free(csr_merge_plan* plan);

/* ---- dictionary training (CSRD files) ---- */

/* options_json:
 * {"train":{...train config...},"per_head_atoms":256,"val_fraction":0.0,
 *  "head_shared":false}
 * "per_head_atoms" defaults to the train config's num_atoms. Returns the
 * trained store and a JSON training report (either out pointer may be NULL
 * if that result is not wanted). */
CSR_API csr_status csr_train(const csr_capture* cap, const csr_merge_plan* plan,
                             const char* options_json, csr_dict_store** out_store,
                             char** out_report_json);

CSR_API csr_status csr_dict_store_save(const csr_dict_store* store, const char* path);
CSR_API csr_status csr_dict_store_load(const char* path, csr_dict_store** out);
/* Geometry, merge plan, train config echo, and the content hash. */
CSR_API csr_status csr_dict_store_info(const csr_dict_store* store, char** out_json);
CSR_API void csr_dict_store_free(csr_dict_store* store);

/* ---- compression and cache snapshots (CSRS files) ---- */

/* options_json:
 * {"codec":{"s":8,"s_n":1,"outlier_threshold":null,"head_dim":128},
 *  "online_size":0,"seed":0}
 * Builds per-(layer, head) prompt dictionaries from the capture and
 * prefill-compresses every block. */
CSR_API csr_status csr_compress(const csr_capture* cap, const csr_dict_store* store,
                                const char* options_json, csr_cache** out_cache);

CSR_API csr_status csr_cache_save(const csr_cache* cache, const char* path);
CSR_API csr_status csr_cache_load(const char* path, const csr_dict_store* store, csr_cache** out);
/* Decodes tokens [from, to) of one lane into out (row-major, (to - from) x
 * head_dim floats); out_len is the capacity in floats. */
CSR_API csr_status csr_cache_decode(const csr_cache* cache, int layer, int head, int64_t from,
                                    int64_t to, float* out, size_t out_len);
CSR_API csr_status csr_cache_token_count(const csr_cache* cache, int layer, int head,
                                         int64_t* out);
CSR_API csr_status csr_cache_memory_report(const csr_cache* cache, char** out_json);
CSR_API csr_status csr_cache_info(const csr_cache* cache, char** out_json);
CSR_API void csr_cache_free(csr_cache* cache);

/* ---- evaluation ---- */

/* options_json:
 * {"codec":{...template...},"s_list":[2,4,8],"attention":true}
 * Either out pointer may be NULL. */
CSR_API csr_status csr_eval_sweep(const csr_capture* cap, const csr_dict_store* store,
                                  const char* options_json, char** out_report_json,
                                  char** out_csv);

/* Decodes every lane of a snapshot and, when a capture is supplied, compares
 * against its blocks; always includes the memory report. */
CSR_API csr_status csr_eval_snapshot(const csr_cache* cache, const csr_capture* cap_or_null,
                                     char** out_report_json);

/* options_json:
 * {"seq_lengths":[0,1024,4096],"num_layers":32,"num_heads":32,
 *  "head_dim":128,"batch":1,"s":8,"s_n":1,"online_atoms_per_head":0,
 *  "offline_store_bytes":0,"quant_bits":[2,4,8]}
 * Either out pointer may be NULL. */
CSR_API csr_status csr_footprint_curve(const char* options_json, char** out_json,
                                       char** out_csv);

/* Runs the four directional ablation experiments. Check "all_passed" in the
 * returned report. */
CSR_API csr_status csr_ablate(uint64_t seed, char** out_report_json);

#ifdef __cplusplus
}
#endif

#endif /* CSR_CSR_H */
