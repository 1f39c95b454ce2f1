#ifndef GROUNDKIT_H
#define GROUNDKIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GkStatus {
  GK_STATUS_OK = 0,
  GK_STATUS_NULL_ARGUMENT = 1,
  GK_STATUS_INVALID_UTF8 = 2,
  GK_STATUS_PARSE = 3,
  GK_STATUS_REGISTRY = 4,
  GK_STATUS_SNAPSHOT = 5,
  GK_STATUS_GEOMETRY = 6,
  GK_STATUS_OUT_OF_BOUNDS = 7,
  GK_STATUS_NOT_PRESENT = 8,
  GK_STATUS_PANIC = 99,
} GkStatus;

typedef enum GkDialect {
  GK_DIALECT_TAGGED = 0,
  GK_DIALECT_PAIR = 1,
} GkDialect;

// A parsed unified action.
typedef struct GkAction GkAction;

// Interactable elements extracted from one snapshot.
typedef struct GkElements GkElements;

// Raw-name to canonical-action registry.
typedef struct GkRegistry GkRegistry;

// Per-mille point, both coordinates in `[0, 1000]`.
typedef struct GkPoint {
  uint16_t x;
  uint16_t y;
} GkPoint;

// Per-mille box with `x1 <= x2` and `y1 <= y2`.
typedef struct GkBox {
  uint16_t x1;
  uint16_t y1;
  uint16_t x2;
  uint16_t y2;
} GkBox;

// Page-pixel box.
typedef struct GkPixelBox {
  uint32_t x1;
  uint32_t y1;
  uint32_t x2;
  uint32_t y2;
} GkPixelBox;

typedef struct GkDims {
  uint32_t width;
  uint32_t height;
} GkDims;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string.
const char *gk_version(void);

// Message for the last failed call on this thread; empty if none. The
// pointer stays valid until the next failing call on the same thread.
const char *gk_last_error_message(void);

// # Safety
// `s` is null or a string returned by this library and not yet freed.
void gk_string_free(char *s);

// Parse action text in the given dialect.
//
// # Safety
// `text` is a nul-terminated string; `out` is writable.
enum GkStatus gk_action_parse(const char *text, enum GkDialect dialect, struct GkAction **out);

// # Safety
// `action` is a live handle; `out` is writable.
enum GkStatus gk_action_serialize(const struct GkAction *action,
                                  enum GkDialect dialect,
                                  char **out);

// Canonical action name, e.g. `CLICK`.
//
// # Safety
// `action` is a live handle; `out` is writable.
enum GkStatus gk_action_name(const struct GkAction *action, char **out);

// Point argument; `GK_STATUS_NOT_PRESENT` when the action has none.
//
// # Safety
// `action` is a live handle; `out` is writable.
enum GkStatus gk_action_point(const struct GkAction *action, struct GkPoint *out);

// Box argument; `GK_STATUS_NOT_PRESENT` when the action has none.
//
// # Safety
// `action` is a live handle; `out` is writable.
enum GkStatus gk_action_box(const struct GkAction *action, struct GkBox *out);

// # Safety
// `action` is null or a live handle, not used afterwards.
void gk_action_free(struct GkAction *action);

// Build a registry from alias TOML (`[dataset] raw = "CANONICAL"`).
//
// # Safety
// `toml` is a nul-terminated string; `out` is writable.
enum GkStatus gk_registry_from_toml(const char *toml, struct GkRegistry **out);

// Canonical name for a dataset's raw action name.
//
// # Safety
// `registry` is a live handle; strings are nul-terminated; `out` is writable.
enum GkStatus gk_registry_canonicalize(const struct GkRegistry *registry,
                                       const char *raw,
                                       const char *dataset,
                                       char **out);

// Parse action text whose name may be a raw alias of `dataset`.
//
// # Safety
// `registry` is a live handle; strings are nul-terminated; `out` is writable.
enum GkStatus gk_registry_parse(const struct GkRegistry *registry,
                                const char *text,
                                enum GkDialect dialect,
                                const char *dataset,
                                struct GkAction **out);

// # Safety
// `registry` is null or a live handle, not used afterwards.
void gk_registry_free(struct GkRegistry *registry);

// Load a snapshot document and extract its interactable elements with the
// default role set.
//
// # Safety
// `json` is a nul-terminated string; `out` is writable.
enum GkStatus gk_elements_from_snapshot(const char *json, struct GkElements **out);

// Number of elements; 0 for a null handle.
//
// # Safety
// `elements` is null or a live handle.
uintptr_t gk_elements_len(const struct GkElements *elements);

// # Safety
// `elements` is a live handle; `out` is writable.
enum GkStatus gk_element_box(const struct GkElements *elements,
                             uintptr_t index,
                             struct GkPixelBox *out);

// # Safety
// `elements` is a live handle; `out` is writable.
enum GkStatus gk_element_expression(const struct GkElements *elements, uintptr_t index, char **out);

// # Safety
// `elements` is a live handle; `out` is writable.
enum GkStatus gk_element_role(const struct GkElements *elements, uintptr_t index, char **out);

// # Safety
// `elements` is null or a live handle, not used afterwards.
void gk_elements_free(struct GkElements *elements);

// # Safety
// `out` is writable.
enum GkStatus gk_iou(struct GkBox a, struct GkBox b, double *out);

// # Safety
// `out` is writable.
enum GkStatus gk_point_in_box(struct GkPoint p, struct GkBox b, bool *out);

// Whether `pred` lies within 14% of the screen width of `gt`.
//
// # Safety
// `out` is writable.
enum GkStatus gk_click_correct(struct GkPoint pred,
                               struct GkPoint gt,
                               struct GkDims screen,
                               bool *out);

// # Safety
// Strings are nul-terminated; `out` is writable.
enum GkStatus gk_token_f1(const char *pred, const char *gt, double *out);

// # Safety
// Strings are nul-terminated; `out` is writable.
enum GkStatus gk_text_correct(const char *pred, const char *gt, bool *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GROUNDKIT_H */
