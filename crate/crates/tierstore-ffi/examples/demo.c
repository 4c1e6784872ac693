/* Round-trips a value through the codec and checks one simulated run.
 *
 * Build from the repository root:
 *   cargo build -p tierstore-ffi
 *   cc crates/tierstore-ffi/examples/demo.c -Icrates/tierstore-ffi/include \
 *      target/debug/libtierstore_ffi.a -lpthread -ldl -lm -o demo
 */

#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "tierstore.h"

#define CHECK(call)                                                       \
    do {                                                                  \
        TierstoreStatus s = (call);                                       \
        if (s != TIERSTORE_STATUS_OK) {                                   \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s,              \
                    tierstore_last_error());                              \
            return 1;                                                     \
        }                                                                 \
    } while (0)

static const char *SCENARIO =
    "{"
    "  \"version\": 1,"
    "  \"code\": { \"n1\": 4, \"f1\": 1, \"n2\": 5, \"f2\": 1, \"beta\": 1, \"q\": 65537 },"
    "  \"delays\": {"
    "    \"client_edge\": { \"kind\": \"fixed\", \"value\": 1 },"
    "    \"edge_edge\": { \"kind\": \"fixed\", \"value\": 1 },"
    "    \"edge_backend\": { \"kind\": \"fixed\", \"value\": 10 }"
    "  },"
    "  \"workload\": ["
    "    { \"client\": \"w1\", \"op\": \"write\", \"value_seed\": 7, \"at\": 0 },"
    "    { \"client\": \"r1\", \"op\": \"read\", \"at\": 40 }"
    "  ],"
    "  \"seed\": 1,"
    "  \"horizon\": 500"
    "}";

int main(void) {
    TierstoreCode *code = NULL;
    CHECK(tierstore_code_new(5, 2, 3, 1, 13, &code));
    size_t n = tierstore_code_nodes(code);
    size_t alpha = tierstore_code_element_len(code);
    size_t b = tierstore_code_value_len(code);

    uint64_t value[] = {1, 2, 3, 4, 5};
    uint64_t *elements = calloc(n * alpha, sizeof(uint64_t));
    CHECK(tierstore_code_encode(code, value, b, elements, n * alpha));

    uint32_t nodes[] = {1, 4};
    uint64_t shares[6];
    memcpy(shares, &elements[0], alpha * sizeof(uint64_t));
    memcpy(shares + alpha, &elements[3 * alpha], alpha * sizeof(uint64_t));
    uint64_t decoded[5] = {0};
    CHECK(tierstore_code_decode(code, nodes, shares, 2, decoded, b));
    printf("decoded from nodes 1 and 4: %s\n",
           memcmp(decoded, value, sizeof value) == 0 ? "match" : "MISMATCH");
    free(elements);
    tierstore_code_free(code);

    TierstoreRun *run = NULL;
    CHECK(tierstore_run_scenario(SCENARIO, NULL, &run));
    bool pass = false;
    CHECK(tierstore_run_verdict_json(run, NULL, &pass, NULL));
    printf("run: %llu records, verdict %s\n",
           (unsigned long long)tierstore_run_record_count(run),
           pass ? "pass" : "fail");
    tierstore_run_free(run);
    return pass ? 0 : 1;
}
