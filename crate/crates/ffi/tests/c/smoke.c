#include <math.h>
#include <stdio.h>
#include "ccbank.h"

static int fail(const char *what) {
    fprintf(stderr, "%s: %s\n", what, ccb_last_error());
    return 1;
}

int main(void) {
    CcbOracle *toy = ccb_oracle_toy(3);
    uint32_t ids[] = {10, 20, 21, 22, 6};
    uint8_t mask[] = {0, 1, 1, 1, 0};
    double phi[3], base, full;
    if (ccb_shapley(toy, ids, mask, 5, 23, CCB_ESTIMATOR_EXACT, 12, 1, 0, phi, 3, &base, &full) != CCB_STATUS_OK)
        return fail("shapley");
    double gap = fabs(base + phi[0] + phi[1] + phi[2] - full);
    if (gap > 1e-9)
        return fail("efficiency");
    if (ccb_shapley(toy, ids, mask, 5, 23, CCB_ESTIMATOR_EXACT, 12, 1, 0, phi, 2, NULL, NULL) !=
        CCB_STATUS_BUFFER_TOO_SMALL)
        return fail("capacity");
    uint8_t b[] = {1, 1, 0, 0};
    double c[] = {2, 2, 0, 0}, r;
    if (ccb_point_biserial(b, c, 4, &r) != CCB_STATUS_OK || r != 1.0)
        return fail("point_biserial");
    ccb_oracle_free(toy);
    printf("ok %s\n", ccb_version());
    return 0;
}
