/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef RVMCU_H
#define RVMCU_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RvmcuStatus {
  RVMCU_STATUS_OK = 0,
  RVMCU_STATUS_NULL_POINTER = 1,
  RVMCU_STATUS_INVALID_ARGUMENT = 2,
  RVMCU_STATUS_LOAD_ERROR = 3,
  RVMCU_STATUS_CONFIG_ERROR = 4,
  RVMCU_STATUS_OUT_OF_RANGE = 5,
  RVMCU_STATUS_BUFFER_TOO_SMALL = 6,
  RVMCU_STATUS_PANIC = 7,
} RvmcuStatus;

typedef enum RvmcuStep {
  RVMCU_STEP_RETIRED = 0,
  RVMCU_STEP_TRAPPED = 1,
  RVMCU_STEP_BREAKPOINT = 2,
  RVMCU_STEP_DEBUG_HALT = 3,
  RVMCU_STEP_WFI_IDLE = 4,
  RVMCU_STEP_FAULT = 5,
} RvmcuStep;

typedef enum RvmcuStop {
  RVMCU_STOP_INSTRET_LIMIT = 0,
  RVMCU_STOP_CYCLE_LIMIT = 1,
  RVMCU_STOP_BREAKPOINT = 2,
  RVMCU_STOP_DEBUG_HALT = 3,
  RVMCU_STOP_PAUSED = 4,
  RVMCU_STOP_WFI_DEADLOCK = 5,
  RVMCU_STOP_IDLE = 6,
  RVMCU_STOP_FAULT = 7,
} RvmcuStop;

/**
 * Opaque machine handle.
 */
typedef struct RvmcuMachine RvmcuMachine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code. Never null.
 */
const char *rvmcu_status_str(enum RvmcuStatus status);

/**
 * Library version as a static string.
 */
const char *rvmcu_version(void);

/**
 * Create a machine. `bank_size` 0 selects the default. With `timing`
 * false every instruction costs one cycle.
 */
enum RvmcuStatus rvmcu_new(uint32_t bank_size, bool timing, struct RvmcuMachine **out);

/**
 * Release a machine. Null is ignored.
 */
void rvmcu_free(struct RvmcuMachine *m);

/**
 * Message for the last failed call on this handle, or "". Valid until the
 * next call on the same handle.
 */
const char *rvmcu_last_error(const struct RvmcuMachine *m);

/**
 * Load an ELF32 image from memory. `entry` may be null.
 */
enum RvmcuStatus rvmcu_load_elf(struct RvmcuMachine *m,
                                const uint8_t *data,
                                size_t len,
                                uint32_t *entry);

/**
 * Load a flat binary at `base`. `entry` may be null.
 */
enum RvmcuStatus rvmcu_load_bin(struct RvmcuMachine *m,
                                const uint8_t *data,
                                size_t len,
                                uint32_t base,
                                uint32_t *entry);

/**
 * Load firmware from a file. `is_elf` false loads a flat binary at `base`.
 */
enum RvmcuStatus rvmcu_load_file(struct RvmcuMachine *m,
                                 const char *path,
                                 bool is_elf,
                                 uint32_t base,
                                 uint32_t *entry);

/**
 * Install an instruction-indexed stimulus script (same text format as the
 * command line).
 */
enum RvmcuStatus rvmcu_set_stimulus(struct RvmcuMachine *m, const char *script);

/**
 * Back to power-on state with the firmware reloaded.
 */
enum RvmcuStatus rvmcu_reset(struct RvmcuMachine *m);

/**
 * EBREAK halts instead of trapping while a debugger is attached.
 */
enum RvmcuStatus rvmcu_set_debug(struct RvmcuMachine *m, bool attached);

/**
 * One step boundary. `result` may be null.
 */
enum RvmcuStatus rvmcu_step(struct RvmcuMachine *m, enum RvmcuStep *result);

/**
 * Run until a limit or a halt. A zero limit means unbounded; with both
 * zero the run ends only on a halt. `reason` may be null.
 */
enum RvmcuStatus rvmcu_run(struct RvmcuMachine *m,
                           uint64_t max_instret,
                           uint64_t max_cycles,
                           enum RvmcuStop *reason);

enum RvmcuStatus rvmcu_pc(struct RvmcuMachine *m, uint32_t *out);

/**
 * Read general-purpose register `index` (0..=31).
 */
enum RvmcuStatus rvmcu_reg(struct RvmcuMachine *m, uint32_t index, uint32_t *out);

/**
 * Write general-purpose register `index`. Writes to x0 are ignored.
 */
enum RvmcuStatus rvmcu_set_reg(struct RvmcuMachine *m, uint32_t index, uint32_t value);

/**
 * Retired instructions and elapsed cycles. Either pointer may be null.
 */
enum RvmcuStatus rvmcu_counters(struct RvmcuMachine *m, uint64_t *instret, uint64_t *cycles);

enum RvmcuStatus rvmcu_set_switches(struct RvmcuMachine *m, uint16_t value);

enum RvmcuStatus rvmcu_leds(struct RvmcuMachine *m, uint16_t *out);

/**
 * Drive the external input pins of GPIO port 0..=2 (A..C).
 */
enum RvmcuStatus rvmcu_set_gpio(struct RvmcuMachine *m, uint32_t port, uint8_t value);

/**
 * Direction and output latches of a GPIO port. Either pointer may be null.
 */
enum RvmcuStatus rvmcu_gpio(struct RvmcuMachine *m, uint32_t port, uint8_t *dir, uint8_t *out);

/**
 * Queue bytes on the UART receiver. `accepted` (may be null) receives how
 * many fit in the receive FIFO.
 */
enum RvmcuStatus rvmcu_uart_push(struct RvmcuMachine *m,
                                 const uint8_t *data,
                                 size_t len,
                                 size_t *accepted);

/**
 * Take up to `cap` bytes of UART output. `written` receives the count.
 */
enum RvmcuStatus rvmcu_uart_take(struct RvmcuMachine *m, uint8_t *buf, size_t cap, size_t *written);

/**
 * `added` (may be null) is false when the breakpoint already existed.
 */
enum RvmcuStatus rvmcu_set_breakpoint(struct RvmcuMachine *m, uint32_t pc, bool *added);

/**
 * `removed` (may be null) is false when no breakpoint was set there.
 */
enum RvmcuStatus rvmcu_clear_breakpoint(struct RvmcuMachine *m, uint32_t pc, bool *removed);

/**
 * Copy RAM into `buf` without side effects. The whole range must be RAM.
 */
enum RvmcuStatus rvmcu_read_mem(struct RvmcuMachine *m, uint32_t addr, uint8_t *buf, size_t len);

/**
 * Write bytes into RAM. The whole range must be RAM.
 */
enum RvmcuStatus rvmcu_write_mem(struct RvmcuMachine *m,
                                 uint32_t addr,
                                 const uint8_t *data,
                                 size_t len);

/**
 * Machine state as the JSON `snapshot` message of the control protocol,
 * NUL-terminated. `needed` receives the size including the terminator;
 * when `cap` is smaller nothing is written and the call reports
 * `RVMCU_STATUS_BUFFER_TOO_SMALL`.
 */
enum RvmcuStatus rvmcu_snapshot_json(struct RvmcuMachine *m, char *buf, size_t cap, size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RVMCU_H */
