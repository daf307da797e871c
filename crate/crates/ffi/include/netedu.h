#ifndef NETEDU_H
#define NETEDU_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NeteduStatus {
  NETEDU_STATUS_OK = 0,
  NETEDU_STATUS_NULL_POINTER = 1,
  NETEDU_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Malformed input: bad framing, unknown frame type, bad escape.
   */
  NETEDU_STATUS_DECODE = 3,
  /**
   * CRC mismatch.
   */
  NETEDU_STATUS_INTEGRITY = 4,
  /**
   * The operation is not valid in the handle's current state.
   */
  NETEDU_STATUS_STATE = 5,
  NETEDU_STATUS_NOT_FOUND = 6,
  NETEDU_STATUS_IO = 7,
  /**
   * A bug inside the library; the handle involved should be dropped.
   */
  NETEDU_STATUS_PANIC = 8,
} NeteduStatus;

typedef enum NeteduLinkType {
  NETEDU_LINK_TYPE_ETHERNET = 0,
  NETEDU_LINK_TYPE_RAW_IP = 1,
} NeteduLinkType;

typedef struct NeteduBank NeteduBank;

typedef struct NeteduReceiver NeteduReceiver;

/**
 * MTP sender state plus a queue of encoded datagrams waiting to be sent.
 */
typedef struct NeteduSender NeteduSender;

/**
 * Library-owned byte buffer. An empty buffer has `data == NULL`.
 */
typedef struct NeteduBuffer {
  uint8_t *data;
  size_t len;
} NeteduBuffer;

typedef struct NeteduFrameInfo {
  /**
   * 0 = DATA, 1 = ACK, 2 = FIN.
   */
  uint8_t ftype;
  uint8_t seq;
  uint8_t window;
} NeteduFrameInfo;

/**
 * Segment-level New Reno scenario. `losses` lists 1-based transmission
 * ordinals that the link drops.
 */
typedef struct NeteduScenario {
  double rtt_ms;
  uint32_t num_segments;
  double init_cwnd;
  double ssthresh0;
  double rto_ms;
  const uint64_t *losses;
  size_t num_losses;
} NeteduScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. Owned by the
 * library.
 */
const char *netedu_last_error(void);

const char *netedu_version(void);

/**
 * # Safety
 * `buf` must come from this library and not have been freed.
 */
void netedu_buffer_free(struct NeteduBuffer buf);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library.
 */
void netedu_string_free(char *s);

/**
 * CRC-32 (IEEE 802.3) of `len` bytes.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum NeteduStatus netedu_crc32(const uint8_t *data, size_t len, uint32_t *out);

/**
 * Wraps `payload` in FLAG bytes with ESC stuffing.
 *
 * # Safety
 * `payload` must point to `len` readable bytes; `out` must be writable.
 */
enum NeteduStatus netedu_stuff(const uint8_t *payload, size_t len, struct NeteduBuffer *out);

/**
 * Inverse of [`netedu_stuff`]; `frame` includes both FLAG bytes.
 *
 * # Safety
 * `frame` must point to `len` readable bytes; `out` must be writable.
 */
enum NeteduStatus netedu_destuff(const uint8_t *frame, size_t len, struct NeteduBuffer *out);

/**
 * Encodes one MTP frame (header, payload, CRC-32).
 *
 * # Safety
 * `payload` must point to `len` readable bytes; `out` must be writable.
 */
enum NeteduStatus netedu_frame_encode(struct NeteduFrameInfo info,
                                      const uint8_t *payload,
                                      size_t len,
                                      struct NeteduBuffer *out);

/**
 * Decodes and CRC-checks one MTP datagram. `payload` may be NULL when the
 * caller does not need it.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `info` must be writable and
 * `payload` NULL or writable.
 */
enum NeteduStatus netedu_frame_decode(const uint8_t *data,
                                      size_t len,
                                      struct NeteduFrameInfo *info,
                                      struct NeteduBuffer *payload);

/**
 * Creates a sender. `window` is capped at 31; `rto_ms <= 0` selects the
 * default of 200 ms.
 *
 * # Safety
 * `out` must be writable.
 */
enum NeteduStatus netedu_sender_new(uint8_t window, double rto_ms, struct NeteduSender **out);

/**
 * # Safety
 * `s` must be NULL or a live sender.
 */
void netedu_sender_free(struct NeteduSender *s);

/**
 * Queues application bytes for sending. Times are milliseconds on any
 * monotonic clock chosen by the caller.
 *
 * # Safety
 * `s` must be a live sender; `data` must point to `len` readable bytes.
 */
enum NeteduStatus netedu_sender_write(struct NeteduSender *s,
                                      const uint8_t *data,
                                      size_t len,
                                      double now_ms);

/**
 * Ends the stream; a FIN follows the queued data.
 *
 * # Safety
 * `s` must be a live sender.
 */
enum NeteduStatus netedu_sender_close(struct NeteduSender *s, double now_ms);

/**
 * Feeds a datagram received from the peer. Corrupted datagrams are
 * reported as `NETEDU_STATUS_INTEGRITY` and otherwise ignored.
 *
 * # Safety
 * `s` must be a live sender; `data` must point to `len` readable bytes.
 */
enum NeteduStatus netedu_sender_on_datagram(struct NeteduSender *s,
                                            const uint8_t *data,
                                            size_t len,
                                            double now_ms);

/**
 * Runs the retransmission timer. Returns `NETEDU_STATUS_STATE` once a frame
 * has expired too often and the connection is aborted.
 *
 * # Safety
 * `s` must be a live sender.
 */
enum NeteduStatus netedu_sender_on_tick(struct NeteduSender *s, double now_ms);

/**
 * Time of the next timer expiry, or a negative value when nothing is in
 * flight.
 *
 * # Safety
 * `s` must be NULL or a live sender.
 */
double netedu_sender_next_timeout(const struct NeteduSender *s);

/**
 * Pops the next datagram to send. Returns false, leaving `out` untouched,
 * when the queue is empty.
 *
 * # Safety
 * `s` must be a live sender; `out` must be writable.
 */
bool netedu_sender_poll(struct NeteduSender *s, struct NeteduBuffer *out);

/**
 * True once every byte and the FIN have been acknowledged.
 *
 * # Safety
 * `s` must be NULL or a live sender.
 */
bool netedu_sender_is_finished(const struct NeteduSender *s);

/**
 * # Safety
 * `out` must be writable.
 */
enum NeteduStatus netedu_receiver_new(uint8_t window, struct NeteduReceiver **out);

/**
 * # Safety
 * `r` must be NULL or a live receiver.
 */
void netedu_receiver_free(struct NeteduReceiver *r);

/**
 * Feeds a datagram from the sender. On success `ack` holds the encoded ACK
 * to send back (empty for incoming ACKs) and `data` the bytes released in
 * order. On failure both are set empty.
 *
 * # Safety
 * `r` must be a live receiver; `data_in` must point to `len` readable
 * bytes; `ack` and `data` must be writable.
 */
enum NeteduStatus netedu_receiver_on_datagram(struct NeteduReceiver *r,
                                              const uint8_t *data_in,
                                              size_t len,
                                              struct NeteduBuffer *ack,
                                              struct NeteduBuffer *data);

/**
 * True after the FIN has been received in order.
 *
 * # Safety
 * `r` must be NULL or a live receiver.
 */
bool netedu_receiver_is_closed(const struct NeteduReceiver *r);

/**
 * Analytic New Reno timeline as text, one event per line.
 *
 * # Safety
 * `s` must point to a valid scenario; `out` must be writable.
 */
enum NeteduStatus netedu_newreno_predict(const struct NeteduScenario *s, char **out);

/**
 * Timeline measured by simulating the scenario over a lossy link.
 *
 * # Safety
 * `s` must point to a valid scenario; `out` must be writable.
 */
enum NeteduStatus netedu_newreno_measure(const struct NeteduScenario *s, char **out);

/**
 * Loads every exercise in `dir`.
 *
 * # Safety
 * `dir` must be a NUL-terminated path; `out` must be writable.
 */
enum NeteduStatus netedu_bank_open(const char *dir, struct NeteduBank **out);

/**
 * # Safety
 * `b` must be NULL or a live bank.
 */
void netedu_bank_free(struct NeteduBank *b);

/**
 * Student view of exercise `id` instantiated with `seed`, as JSON.
 *
 * # Safety
 * `b` must be a live bank; `id` NUL-terminated; `out` writable.
 */
enum NeteduStatus netedu_bank_render(struct NeteduBank *b,
                                     const char *id,
                                     uint64_t seed,
                                     char **out);

/**
 * Grades a JSON submission such as `{"choice":2}` against the instance of
 * `id` drawn with `seed`; writes the verdict as JSON.
 *
 * # Safety
 * `b` must be a live bank; `id` and `submission` NUL-terminated; `out`
 * writable.
 */
enum NeteduStatus netedu_bank_grade(struct NeteduBank *b,
                                    const char *id,
                                    uint64_t seed,
                                    const char *submission,
                                    char **out);

/**
 * Dissects one packet and writes the canonical field tree as text.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum NeteduStatus netedu_dissect(const uint8_t *data,
                                 size_t len,
                                 enum NeteduLinkType link,
                                 char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NETEDU_H */
