#include <stdio.h>
#include <assert.h>
#include "msmha.h"

int main(void) {
    uint32_t dims[8];
    assert(msmha_head_schedule(512, 8, dims, 8) == MSMHA_STATUS_OK);
    assert(dims[0] == 512 && dims[7] == 4);

    uint64_t count = 0;
    assert(msmha_pyramid_param_count(512, 8, false, &count) == MSMHA_STATUS_OK);
    assert(count == 2088960ULL);

    assert(msmha_head_schedule(64, 8, dims, 8) == MSMHA_STATUS_CONFIG_ERROR);
    printf("expected failure message: %s\n", msmha_last_error_message());

    float scores[4] = {0.6f, 0.4f, 0.1f, 0.9f};
    uint32_t label = 99;
    assert(msmha_late_fuse(scores, 2, 2, &label, NULL) == MSMHA_STATUS_OK);
    assert(label == 1);

    printf("C smoke test ok (version %s)\n", msmha_version());
    return 0;
}
