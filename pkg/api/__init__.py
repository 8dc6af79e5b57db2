# Isoprofile API
