#include <math.h>
#include <stdio.h>
#include <string.h>

#include "mtr_meta.h"

#define CHECK(cond)                                              \
    do {                                                         \
        if (!(cond)) {                                           \
            fprintf(stderr, "check failed line %d: %s\n", __LINE__, #cond); \
            return 1;                                            \
        }                                                        \
    } while (0)

int main(void) {
    double cd = 0.0;
    CHECK(mtr_nemenyi_cd(7, 648, 0.05, &cd) == MTR_STATUS_OK);
    CHECK(fabs(cd - 0.35) < 0.005);

    CHECK(mtr_nemenyi_cd(42, 648, 0.05, &cd) == MTR_STATUS_INVALID_ARGUMENT);
    char msg[256];
    CHECK(mtr_last_error_message(msg, sizeof msg) > 0);
    CHECK(strstr(msg, "42") != NULL);

    MtrDataset *ds = NULL;
    CHECK(mtr_dataset_generate(60, 6, 3, 1, 5.0, 0, 7, &ds) == MTR_STATUS_OK);
    size_t n = 0, m = 0, d = 0;
    CHECK(mtr_dataset_shape(ds, &n, &m, &d) == MTR_STATUS_OK);
    CHECK(n == 60 && m == 6 && d == 3);

    double mf[58];
    CHECK(mtr_meta_feature_count() == 58);
    CHECK(mtr_meta_features(ds, mf) == MTR_STATUS_OK);
    CHECK(mf[0] == 60.0);
    CHECK(strcmp(mtr_meta_feature_name(57), "S4.sd") == 0);

    double scores[4];
    MtrMethod best;
    CHECK(mtr_cv_evaluate(ds, MTR_BASE_KIND_RIDGE, 1.0, 5, 3, scores, &best) == MTR_STATUS_OK);
    for (int i = 0; i < 4; i++) {
        CHECK(scores[best] <= scores[i]);
    }
    mtr_dataset_free(ds);
    mtr_dataset_free(NULL);

    CHECK(mtr_dataset_new(NULL, NULL, 1, 1, 1, &ds) == MTR_STATUS_NULL_POINTER);

    printf("ok %s\n", mtr_version());
    return 0;
}
