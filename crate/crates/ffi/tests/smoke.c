#include <math.h>
#include <stdio.h>

#include "multitime.h"

#define CHECK(cond)                                                      \
    do {                                                                 \
        if (!(cond)) {                                                   \
            const char *msg = mt_last_error_message();                   \
            fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond,       \
                    msg ? msg : "no message");                           \
            return 1;                                                    \
        }                                                                \
    } while (0)

int main(void) {
    MtModel *model = NULL;
    CHECK(mt_model_from_json("{\"id\": \"haar\", \"d_s\": 2, \"d_e\": 8}", 1, 7, &model) == MT_STATUS_OK);

    MtProcess *proc = NULL;
    CHECK(mt_model_process(model, 1, &proc) == MT_STATUS_OK);

    MtProcessInfo info;
    CHECK(mt_process_info(proc, &info) == MT_STATUS_OK);
    CHECK(info.k == 1 && info.d_b == 4 && info.total_dim == 64);

    double lhs = 0.0, rhs = 0.0;
    CHECK(mt_pesin_check(proc, &lhs, &rhs) == MT_STATUS_OK);
    CHECK(fabs(lhs - rhs) < 1e-8);

    const double id[8] = {1, 0, 0, 0, 0, 0, 1, 0};
    const double x[8] = {0, 0, 1, 0, 1, 0, 0, 0};
    MtBffResult r;
    CHECK(mt_bff_optimize(proc, x, id, MT_FAMILY_LOCAL, 0, 0, 0, 1, &r) == MT_STATUS_OK);
    CHECK(r.zeta >= r.identity_fidelity && r.zeta <= 1.0 + 1e-10);

    CHECK(mt_model_process(NULL, 1, &proc) == MT_STATUS_NULL_POINTER);
    CHECK(mt_last_error_message() != NULL);

    mt_process_free(proc);
    mt_model_free(model);
    printf("ok\n");
    return 0;
}
