/* SPDX-License-Identifier: Apache-2.0 */

#ifndef AGENTFACTS_H
#define AGENTFACTS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum AfStatus {
  AF_STATUS_OK = 0,
  AF_STATUS_NULL_ARGUMENT = 1,
  AF_STATUS_INVALID_UTF8 = 2,
  AF_STATUS_INVALID_JSON = 3,
  AF_STATUS_INVALID_DOCUMENT = 4,
  AF_STATUS_INVALID_ARGUMENT = 5,
  AF_STATUS_SIGNING_FAILED = 6,
  AF_STATUS_EVALUATION_FAILED = 7,
  AF_STATUS_PANIC = 99,
} AfStatus;

// An owned agent facts document.
typedef struct AfDocument AfDocument;

// An owned private signing key.
typedef struct AfKey AfKey;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null. Owned by
// the library; valid until the next call on the same thread.
const char *af_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void af_string_free(char *s);

// Library version, static storage.
const char *af_version(void);

// Parses a JSON document.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum AfStatus af_document_parse(const char *json, struct AfDocument **out);

// Releases a document. Null is ignored.
//
// # Safety
// `doc` must come from [`af_document_parse`] and not have been freed.
void af_document_free(struct AfDocument *doc);

// Validation report as JSON. Returns `InvalidDocument` when it contains errors.
//
// # Safety
// `doc` must be a live handle; `out` must be writable.
enum AfStatus af_document_validate(const struct AfDocument *doc, char **out);

// Pretty JSON rendering of the document.
//
// # Safety
// `doc` must be a live handle; `out` must be writable.
enum AfStatus af_document_to_json(const struct AfDocument *doc, char **out);

// Canonical bytes of the document.
//
// # Safety
// `doc` must be a live handle; `out` must be writable.
enum AfStatus af_document_canonical(const struct AfDocument *doc, char **out);

// `sha-256:<hex>` digest of the canonical bytes.
//
// # Safety
// `doc` must be a live handle; `out` must be writable.
enum AfStatus af_document_digest(const struct AfDocument *doc, char **out);

// Ed25519 key from a 32-byte seed.
//
// # Safety
// `seed` must point to `seed_len` readable bytes; `name` must be a
// NUL-terminated string; `out` must be writable.
enum AfStatus af_key_from_seed(const uint8_t *seed,
                               size_t seed_len,
                               const char *name,
                               struct AfKey **out);

// Releases a key. Null is ignored.
//
// # Safety
// `key` must come from [`af_key_from_seed`] and not have been freed.
void af_key_free(struct AfKey *key);

// Public authority record of a key, as JSON.
//
// # Safety
// `key` must be a live handle; `out` must be writable.
enum AfStatus af_key_authority(const struct AfKey *key, char **out);

// Signs the comma-separated `sections`, attaches the block to `doc` and
// returns it as JSON. `signed_at` may be null for the current time.
//
// # Safety
// Handles must be live; strings NUL-terminated; `out` writable.
enum AfStatus af_document_sign(struct AfDocument *doc,
                               const struct AfKey *key,
                               const char *sections,
                               double confidence,
                               const char *signed_at,
                               char **out);

// Status of every carried signature as a JSON array of
// `{"index", "authority_id", "status"}`. `revocations` may be null.
//
// # Safety
// `doc` must be a live handle; strings NUL-terminated; `out` writable.
enum AfStatus af_document_verify(const struct AfDocument *doc,
                                 const char *authorities,
                                 const char *revocations,
                                 const char *at,
                                 char **out);

// Trust verdict as JSON. `revocations` and `at` may be null.
//
// # Safety
// `doc` must be a live handle; strings NUL-terminated; `out` writable.
enum AfStatus af_trust_evaluate(const struct AfDocument *doc,
                                const char *policy,
                                const char *authorities,
                                const char *revocations,
                                const char *at,
                                char **out);

// Freshness report as JSON. `policy` and `at` may be null.
//
// # Safety
// `doc` must be a live handle; strings NUL-terminated; `out` writable.
enum AfStatus af_freshness(const struct AfDocument *doc,
                           const char *policy,
                           const char *at,
                           char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AGENTFACTS_H */
