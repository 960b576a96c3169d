/* C interface to the migrsim RDMA transport and live-migration simulator.
 *
 * All handles are opaque. Functions return a migrsim_status; on failure the
 * calling thread's last error message is available from
 * migrsim_last_error(). Nothing here is thread-safe across handles shared
 * between threads. */
#ifndef MIGRSIM_MIGRSIM_H_
#define MIGRSIM_MIGRSIM_H_

#include <stddef.h>
#include <stdint.h>

#if defined(MIGRSIM_BUILDING_LIBRARY)
#define MIGRSIM_API __attribute__((visibility("default")))
#else
#define MIGRSIM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum migrsim_status {
  MIGRSIM_OK = 0,
  MIGRSIM_ERR_ARGUMENT = 1,   /* bad argument or unknown object */
  MIGRSIM_ERR_RESOURCE = 2,   /* queue full, identifier space exhausted */
  MIGRSIM_ERR_STATE = 3,      /* operation illegal in the current state */
  MIGRSIM_ERR_COLLISION = 4,  /* restored identifier already taken */
  MIGRSIM_ERR_PARSE = 5,      /* scenario or image does not parse */
  MIGRSIM_ERR_INTERNAL = 6,
} migrsim_status;

typedef enum migrsim_qp_state {
  MIGRSIM_QPS_RESET = 0,
  MIGRSIM_QPS_INIT = 1,
  MIGRSIM_QPS_RTR = 2,
  MIGRSIM_QPS_RTS = 3,
  MIGRSIM_QPS_SQD = 4,
  MIGRSIM_QPS_SQE = 5,
  MIGRSIM_QPS_ERROR = 6,
  MIGRSIM_QPS_STOPPED = 7,
  MIGRSIM_QPS_PAUSED = 8,
} migrsim_qp_state;

typedef enum migrsim_wr_opcode {
  MIGRSIM_WR_SEND = 0,
  MIGRSIM_WR_RDMA_WRITE = 1,
} migrsim_wr_opcode;

enum {
  MIGRSIM_ACCESS_LOCAL_WRITE = 1,
  MIGRSIM_ACCESS_REMOTE_WRITE = 2,
};

#define MIGRSIM_INFINITE_RETRIES 0xFFFFFFFFu

MIGRSIM_API const char* migrsim_version(void);
MIGRSIM_API const char* migrsim_status_name(int status);
/* Message of the last failed call on this thread; "" if none. */
MIGRSIM_API const char* migrsim_last_error(void);

/* ---- Scenario runs ---------------------------------------------------- */

typedef struct migrsim_run migrsim_run;

typedef struct migrsim_run_options {
  int has_seed;
  uint64_t seed;
  int has_max_ticks;
  uint64_t max_ticks;
  int has_migration_enabled;
  int migration_enabled;
} migrsim_run_options;

typedef struct migrsim_run_summary {
  int passed; /* every scenario expectation held */
  uint64_t end_tick;
  uint64_t trace_hash;
  uint64_t packets_sent;
  uint64_t packets_dropped;
  uint64_t messages_delivered;
  uint64_t wc_errors;
  uint32_t migrations;
  uint32_t migrations_failed;
  uint32_t failures; /* unmet expectations */
} migrsim_run_summary;

/* Parses and validates; MIGRSIM_ERR_PARSE carries a line-anchored message. */
MIGRSIM_API int migrsim_run_load(const char* path,
                                 const migrsim_run_options* opts,
                                 migrsim_run** out);
MIGRSIM_API int migrsim_run_parse(const char* yaml, const char* name,
                                  const migrsim_run_options* opts,
                                  migrsim_run** out);
MIGRSIM_API void migrsim_run_destroy(migrsim_run* run);
/* Executes the scenario once. */
MIGRSIM_API int migrsim_run_execute(migrsim_run* run,
                                    migrsim_run_summary* out);
/* Outputs of an executed run. */
MIGRSIM_API int migrsim_run_write_trace(const migrsim_run* run,
                                        const char* path);
MIGRSIM_API int migrsim_run_write_stats(const migrsim_run* run,
                                        const char* path);
MIGRSIM_API int migrsim_run_write_timeline(const migrsim_run* run,
                                           const char* path);
/* i-th unmet expectation; NULL past the end. */
MIGRSIM_API const char* migrsim_run_failure(const migrsim_run* run,
                                            uint32_t i);

/* ---- Resume handshake check ------------------------------------------ */

typedef struct migrsim_resume_snapshot {
  uint32_t first_psn;
  uint32_t first_unacked;
  uint32_t next_psn;
  uint32_t last_psn;
  uint32_t receiver_expects;
  uint32_t mtu;
  uint32_t latency_ticks;
} migrsim_resume_snapshot;

/* Fills the default snapshot: 4, 5, 8, 9, 7, mtu 1024, latency 3. */
MIGRSIM_API void migrsim_resume_snapshot_default(migrsim_resume_snapshot* s);

/* Runs the check. *match is 1 when the packets on the wire equal the
 * expected sequence byte for byte and the message completed intact. The
 * report (expected/actual listing) and trace are copied into the buffers,
 * truncated and NUL-terminated; either may be NULL. */
MIGRSIM_API int migrsim_resume_check(const migrsim_resume_snapshot* s,
                                     int* match, char* report,
                                     size_t report_cap, char* trace,
                                     size_t trace_cap);

/* ---- Cluster: direct verbs access ------------------------------------ */

typedef struct migrsim_cluster migrsim_cluster;

typedef struct migrsim_net_config {
  uint64_t seed;
  uint32_t latency_ticks;
  double loss_rate;
  double dup_rate;
  uint64_t max_ticks;
} migrsim_net_config;

MIGRSIM_API void migrsim_net_config_default(migrsim_net_config* c);
MIGRSIM_API int migrsim_cluster_create(const migrsim_net_config* c,
                                       migrsim_cluster** out);
MIGRSIM_API void migrsim_cluster_destroy(migrsim_cluster* cl);

/* Nodes are numbered in creation order; each gets its own QPN/MRN
 * partition. */
MIGRSIM_API int migrsim_node_add(migrsim_cluster* cl, const char* name,
                                 uint64_t gid_seed, int migration_enabled,
                                 uint32_t* node);
MIGRSIM_API int migrsim_node_gid(const migrsim_cluster* cl, uint32_t node,
                                 uint8_t gid[16]);
MIGRSIM_API int migrsim_node_set_last_qpn(migrsim_cluster* cl, uint32_t node,
                                          uint32_t qpn);
MIGRSIM_API int migrsim_node_set_last_mrn(migrsim_cluster* cl, uint32_t node,
                                          uint32_t mrn);

MIGRSIM_API int migrsim_ctx_open(migrsim_cluster* cl, uint32_t node,
                                 uint32_t ctx);
MIGRSIM_API int migrsim_pd_alloc(migrsim_cluster* cl, uint32_t node,
                                 uint32_t ctx, uint32_t* pd);
MIGRSIM_API int migrsim_mr_reg(migrsim_cluster* cl, uint32_t node,
                               uint32_t ctx, uint32_t pd, uint64_t addr,
                               uint64_t length, uint32_t access, uint32_t* mrn,
                               uint32_t* lkey, uint32_t* rkey);
MIGRSIM_API int migrsim_cq_create(migrsim_cluster* cl, uint32_t node,
                                  uint32_t ctx, uint32_t depth, uint32_t* cq);
MIGRSIM_API int migrsim_srq_create(migrsim_cluster* cl, uint32_t node,
                                   uint32_t ctx, uint32_t pd, uint32_t depth,
                                   uint32_t* srq);

typedef struct migrsim_qp_init {
  uint32_t pd;
  uint32_t send_cq;
  uint32_t recv_cq;
  int has_srq;
  uint32_t srq;
  uint32_t max_send_wr;
  uint32_t max_recv_wr;
  uint32_t max_inflight;
} migrsim_qp_init;

MIGRSIM_API int migrsim_qp_create(migrsim_cluster* cl, uint32_t node,
                                  uint32_t ctx, const migrsim_qp_init* init,
                                  uint32_t* qpn);

/* Zero fields are "not given", except where has_* says otherwise. */
typedef struct migrsim_qp_attr {
  int has_partner;
  uint8_t partner_gid[16];
  uint32_t partner_qpn;
  uint32_t mtu;
  int has_expected_psn;
  uint32_t expected_psn;
  int has_next_psn;
  uint32_t next_psn;
  uint32_t timeout_ticks;
  int has_max_retries;
  uint32_t max_retries;
} migrsim_qp_attr;

MIGRSIM_API int migrsim_qp_modify(migrsim_cluster* cl, uint32_t node,
                                  uint32_t ctx, uint32_t qpn,
                                  migrsim_qp_state target,
                                  const migrsim_qp_attr* attr);
MIGRSIM_API int migrsim_qp_state_get(migrsim_cluster* cl, uint32_t node,
                                     uint32_t qpn, migrsim_qp_state* state);

MIGRSIM_API int migrsim_post_send(migrsim_cluster* cl, uint32_t node,
                                  uint32_t ctx, uint32_t qpn, uint64_t wr_id,
                                  migrsim_wr_opcode op, uint32_t lkey,
                                  uint64_t addr, uint32_t length,
                                  uint32_t rkey, uint64_t remote_addr);
MIGRSIM_API int migrsim_post_recv(migrsim_cluster* cl, uint32_t node,
                                  uint32_t ctx, uint32_t qpn, uint64_t wr_id,
                                  uint32_t lkey, uint64_t addr,
                                  uint32_t length);
MIGRSIM_API int migrsim_post_srq_recv(migrsim_cluster* cl, uint32_t node,
                                      uint32_t ctx, uint32_t srq,
                                      uint64_t wr_id, uint32_t lkey,
                                      uint64_t addr, uint32_t length);

typedef struct migrsim_wc {
  uint64_t wr_id;
  uint32_t status; /* 0 success, 1 LOC_LEN, 2 REM_ACCESS, 3 RETRY_EXC,
                      4 WR_FLUSH */
  uint32_t opcode; /* 0 send, 1 rdma write, 2 recv */
  uint32_t byte_len;
  uint32_t qpn;
} migrsim_wc;

MIGRSIM_API int migrsim_cq_poll(migrsim_cluster* cl, uint32_t node,
                                uint32_t ctx, uint32_t cq, migrsim_wc* wcs,
                                uint32_t max, uint32_t* n);

MIGRSIM_API int migrsim_mem_write(migrsim_cluster* cl, uint32_t node,
                                  uint32_t ctx, uint64_t addr,
                                  const void* data, uint64_t len);
MIGRSIM_API int migrsim_mem_read(migrsim_cluster* cl, uint32_t node,
                                 uint32_t ctx, uint64_t addr, void* data,
                                 uint64_t len);

/* Advances virtual time until nothing is pending or `until_tick`. */
MIGRSIM_API int migrsim_cluster_run(migrsim_cluster* cl, uint64_t until_tick,
                                    uint64_t* now);
MIGRSIM_API uint64_t migrsim_cluster_trace_hash(const migrsim_cluster* cl);
MIGRSIM_API int migrsim_cluster_write_trace(const migrsim_cluster* cl,
                                            const char* path);

/* Checkpoint/restore. dump stops the context's QPs and serializes it; with
 * buf == NULL only *len is set (the context is still stopped). */
MIGRSIM_API int migrsim_ctx_dump(migrsim_cluster* cl, uint32_t node,
                                 uint32_t ctx, uint8_t* buf, size_t cap,
                                 size_t* len);
/* Opens `ctx` on the node and restores the image into it. */
MIGRSIM_API int migrsim_ctx_restore(migrsim_cluster* cl, uint32_t node,
                                    uint32_t ctx, const uint8_t* image,
                                    size_t len);
MIGRSIM_API int migrsim_ctx_destroy(migrsim_cluster* cl, uint32_t node,
                                    uint32_t ctx);

/* Live migration, executed while the cluster runs. */
MIGRSIM_API int migrsim_migrate(migrsim_cluster* cl, uint32_t ctx,
                                uint32_t src_node, uint32_t dst_node,
                                uint64_t trigger_tick, int in_band,
                                uint32_t* migration);

typedef struct migrsim_migration_report {
  int finished;
  int succeeded;
  uint64_t checkpoint_ticks;
  uint64_t transfer_ticks;
  uint64_t restore_ticks;
  uint64_t image_bytes;
} migrsim_migration_report;

MIGRSIM_API int migrsim_migration_report_get(const migrsim_cluster* cl,
                                             uint32_t migration,
                                             migrsim_migration_report* out);
/* Destroys ctx on the listed nodes. Repeating it is a no-op; a context the
 * cluster never saw is an argument error. */
MIGRSIM_API int migrsim_teardown(migrsim_cluster* cl, uint32_t ctx,
                                 const uint32_t* nodes, uint32_t n_nodes);

#ifdef __cplusplus
}
#endif

#endif /* MIGRSIM_MIGRSIM_H_ */
